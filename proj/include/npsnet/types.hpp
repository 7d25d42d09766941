#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "npsnet/core/errors.hpp"

namespace npsnet {

// H x W real field, row-major. Ground truth and predictions share this type.
struct SaliencyMap {
  std::size_t height = 0, width = 0;
  std::vector<double> values;

  SaliencyMap() = default;
  SaliencyMap(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}
  SaliencyMap(std::size_t h, std::size_t w, std::vector<double> v) : height(h), width(w), values(std::move(v)) {
    if (values.size() != h * w) throw DimensionError("saliency map data does not match " + std::to_string(h) + "x" + std::to_string(w));
  }

  double& at(std::size_t row, std::size_t col) { return values[row * width + col]; }
  double at(std::size_t row, std::size_t col) const { return values[row * width + col]; }
  std::size_t size() const { return values.size(); }
  bool same_extents(const SaliencyMap& o) const { return height == o.height && width == o.width; }
};

// One gaze point: column x, row y (pixels), and the observer it came from.
struct Fixation {
  std::int64_t x = 0, y = 0;
  std::int64_t observer = 0;
  friend bool operator==(const Fixation&, const Fixation&) = default;
  friend auto operator<=>(const Fixation&, const Fixation&) = default;
};

struct FixationSet {
  std::int64_t frame = 0;
  std::vector<Fixation> points;

  // Drops duplicates of the same (observer, pixel), keeping first-seen order.
  void deduplicate() {
    std::vector<Fixation> out;
    for (const auto& p : points)
      if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
    points = std::move(out);
  }

  // Keeps only points inside a height x width map.
  FixationSet clipped(std::size_t height, std::size_t width) const {
    FixationSet f{frame, {}};
    for (const auto& p : points)
      if (p.x >= 0 && p.y >= 0 && static_cast<std::size_t>(p.x) < width && static_cast<std::size_t>(p.y) < height)
        f.points.push_back(p);
    return f;
  }

  // Distinct fixated pixels as flat indices (row * width + col), ascending.
  std::vector<std::size_t> pixels(std::size_t width) const {
    std::vector<std::size_t> px;
    for (const auto& p : points) px.push_back(static_cast<std::size_t>(p.y) * width + static_cast<std::size_t>(p.x));
    std::sort(px.begin(), px.end());
    px.erase(std::unique(px.begin(), px.end()), px.end());
    return px;
  }
};

}  // namespace npsnet
