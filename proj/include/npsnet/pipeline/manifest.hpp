#pragma once

// Dataset manifest and stratified train/test split.
//
// Directory layout:
//   <root>/<domain>/<category>/<video>/frames/*.ppm|*.pgm|*.png
//   <root>/<domain>/<category>/<video>/audio.wav
//   <root>/<domain>/<category>/<video>/fixations.csv
// with domain in {cartoon, game}. Frames are ordered by file name.
//
// Split: each domain sends round(n * 18 / 100) videos to test. That quota is
// shared across the domain's categories by largest remainder (ties broken by
// category name), and each category draws its test videos with a seeded
// shuffle of its sorted video ids.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "npsnet/core/checkpoint.hpp"
#include "npsnet/core/errors.hpp"
#include "npsnet/core/random.hpp"

namespace npsnet {

inline constexpr int kManifestSchemaVersion = 1;
inline constexpr std::size_t kTestPerHundred = 18;

enum class Split { Train, Test };

inline const char* to_string(Split s) { return s == Split::Train ? "train" : "test"; }

struct VideoEntry {
  std::string id;        // "<domain>/<category>/<video>"
  std::string domain;    // cartoon | game
  std::string category;
  std::string name;
  std::size_t frames = 0;
  std::vector<std::string> frame_files;  // relative to the manifest root
  std::string audio;
  std::string fixations;
  Split split = Split::Train;
};

struct DatasetManifest {
  std::string root;
  std::uint64_t seed = 0;
  double sigma = 0;  // render sigma for ground-truth maps, pixels at frame resolution
  double fps = 30;
  std::vector<VideoEntry> videos;

  std::vector<const VideoEntry*> select(std::optional<Split> split) const {
    std::vector<const VideoEntry*> out;
    for (const auto& v : videos)
      if (!split || v.split == *split) out.push_back(&v);
    return out;
  }
  std::size_t count(const std::string& domain, Split split) const {
    return static_cast<std::size_t>(std::count_if(videos.begin(), videos.end(), [&](const VideoEntry& v) {
      return v.domain == domain && v.split == split;
    }));
  }
};

inline const std::vector<std::string>& known_domains() {
  static const std::vector<std::string> d{"cartoon", "game"};
  return d;
}

inline bool is_frame_file(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  return ext == ".ppm" || ext == ".pgm" || ext == ".png";
}

// Assigns Split::Test per the stratified rule. Entries keep their order.
inline void assign_split(std::vector<VideoEntry>& videos, std::uint64_t seed) {
  for (const auto& domain : known_domains()) {
    std::map<std::string, std::vector<VideoEntry*>> by_cat;
    std::size_t n = 0;
    for (auto& v : videos)
      if (v.domain == domain) {
        by_cat[v.category].push_back(&v);
        v.split = Split::Train;
        ++n;
      }
    if (n == 0) continue;
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n * kTestPerHundred) / 100.0));
    struct Quota {
      std::string cat;
      std::size_t base;
      std::size_t remainder_num;  // fractional part scaled by n
    };
    std::vector<Quota> quotas;
    std::size_t assigned = 0;
    for (const auto& [cat, list] : by_cat) {
      const std::size_t num = list.size() * n_test;
      quotas.push_back({cat, num / n, num % n});
      assigned += num / n;
    }
    std::vector<std::size_t> order(quotas.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return quotas[a].remainder_num > quotas[b].remainder_num; });
    for (std::size_t i = 0; assigned < n_test; ++i, ++assigned) ++quotas[order[i % order.size()]].base;
    for (const auto& q : quotas) {
      auto list = by_cat[q.cat];
      std::sort(list.begin(), list.end(), [](const VideoEntry* a, const VideoEntry* b) { return a->id < b->id; });
      Rng rng = named_rng(seed, "split/" + domain + "/" + q.cat);
      rng.shuffle(list.begin(), list.end());
      for (std::size_t i = 0; i < q.base && i < list.size(); ++i) list[i]->split = Split::Test;
    }
  }
}

inline DatasetManifest build_manifest(const std::filesystem::path& root, std::uint64_t seed, double sigma = 0, double fps = 30) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw InputError("dataset root " + root.string() + " is not a directory");
  DatasetManifest m;
  m.root = root.string();
  m.seed = seed;
  m.sigma = sigma;
  m.fps = fps;
  std::vector<std::string> problems;
  auto sorted_dirs = [](const fs::path& p) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(p))
      if (e.is_directory()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
  };
  for (const auto& dom : sorted_dirs(root)) {
    const std::string domain = dom.filename().string();
    if (std::find(known_domains().begin(), known_domains().end(), domain) == known_domains().end()) {
      problems.push_back(dom.string() + ": unknown domain (expected cartoon or game)");
      continue;
    }
    for (const auto& cat : sorted_dirs(dom))
      for (const auto& vid : sorted_dirs(cat)) {
        VideoEntry v;
        v.domain = domain;
        v.category = cat.filename().string();
        v.name = vid.filename().string();
        v.id = domain + "/" + v.category + "/" + v.name;
        const fs::path frames = vid / "frames";
        if (!fs::is_directory(frames)) {
          problems.push_back(v.id + ": missing frames/ directory");
        } else {
          std::vector<fs::path> files;
          for (const auto& e : fs::directory_iterator(frames))
            if (e.is_regular_file() && is_frame_file(e.path())) files.push_back(e.path());
          std::sort(files.begin(), files.end());
          if (files.empty()) problems.push_back(v.id + ": frames/ holds no .ppm/.pgm/.png images");
          for (const auto& f : files) v.frame_files.push_back(fs::relative(f, root).generic_string());
          v.frames = files.size();
        }
        if (!fs::is_regular_file(vid / "audio.wav")) problems.push_back(v.id + ": missing audio.wav");
        if (!fs::is_regular_file(vid / "fixations.csv")) problems.push_back(v.id + ": missing fixations.csv");
        v.audio = fs::relative(vid / "audio.wav", root).generic_string();
        v.fixations = fs::relative(vid / "fixations.csv", root).generic_string();
        m.videos.push_back(std::move(v));
      }
  }
  if (!problems.empty()) {
    std::string msg = "dataset at " + root.string() + " is incomplete:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw InputError(msg);
  }
  if (m.videos.empty()) throw InputError("dataset at " + root.string() + " holds no videos");
  assign_split(m.videos, seed);
  return m;
}

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["schema_version"] = kManifestSchemaVersion;
  j["root"] = m.root;
  j["seed"] = m.seed;
  j["sigma"] = m.sigma;
  j["fps"] = m.fps;
  j["videos"] = nlohmann::json::array();
  for (const auto& v : m.videos)
    j["videos"].push_back({{"id", v.id},
                           {"domain", v.domain},
                           {"category", v.category},
                           {"name", v.name},
                           {"frames", v.frames},
                           {"frame_files", v.frame_files},
                           {"audio", v.audio},
                           {"fixations", v.fixations},
                           {"split", to_string(v.split)}});
  return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != kManifestSchemaVersion)
      throw FormatError("unsupported manifest schema_version " + j.at("schema_version").dump());
    DatasetManifest m;
    m.root = j.at("root").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.sigma = j.at("sigma").get<double>();
    m.fps = j.at("fps").get<double>();
    for (const auto& e : j.at("videos")) {
      VideoEntry v;
      v.id = e.at("id").get<std::string>();
      v.domain = e.at("domain").get<std::string>();
      v.category = e.at("category").get<std::string>();
      v.name = e.at("name").get<std::string>();
      v.frames = e.at("frames").get<std::size_t>();
      v.frame_files = e.at("frame_files").get<std::vector<std::string>>();
      v.audio = e.at("audio").get<std::string>();
      v.fixations = e.at("fixations").get<std::string>();
      const auto split = e.at("split").get<std::string>();
      if (split != "train" && split != "test") throw FormatError("video " + v.id + ": unknown split '" + split + "'");
      v.split = split == "train" ? Split::Train : Split::Test;
      m.videos.push_back(std::move(v));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
}

inline std::string manifest_text(const DatasetManifest& m) { return to_json(m).dump(2) + "\n"; }

inline void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  detail::write_file_bytes(path, manifest_text(m));
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  const std::string text = detail::read_file_bytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

}  // namespace npsnet
