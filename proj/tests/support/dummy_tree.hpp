#pragma once

// Placeholder dataset trees for manifest tests: the manifest only checks
// that files exist, so frames, audio and fixations are empty files.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace npsnet::testing {

struct DummyDomain {
  std::string name;
  std::vector<std::pair<std::string, std::size_t>> categories;  // category, video count
};

inline void make_dummy_tree(const std::filesystem::path& root, const std::vector<DummyDomain>& domains,
                            std::size_t frames = 2) {
  for (const auto& d : domains)
    for (const auto& [cat, count] : d.categories)
      for (std::size_t v = 0; v < count; ++v) {
        char name[32];
        std::snprintf(name, sizeof name, "clip%03zu", v);
        const auto dir = root / d.name / cat / name;
        std::filesystem::create_directories(dir / "frames");
        for (std::size_t f = 0; f < frames; ++f) {
          char file[32];
          std::snprintf(file, sizeof file, "%05zu.ppm", f);
          std::ofstream(dir / "frames" / file);
        }
        std::ofstream(dir / "audio.wav");
        std::ofstream(dir / "fixations.csv");
      }
}

}  // namespace npsnet::testing
