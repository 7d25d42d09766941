#pragma once

// Ground-truth saliency from discrete fixations: a sum of isotropic Gaussians
// centred on the fixated pixels, cut off beyond `truncate * sigma`
// (Euclidean), then divided by the map maximum.

#include <algorithm>
#include <cmath>
#include <numbers>

#include "npsnet/core/errors.hpp"
#include "npsnet/types.hpp"

namespace npsnet {

// Display used to convert one degree of visual angle into pixels.
struct ViewingGeometry {
  double diagonal_inches = 27.0;
  double aspect_w = 16.0, aspect_h = 9.0;
  double display_width_px = 1920.0;
  double distance_cm = 70.0;  // middle of the 45-95 cm tracker range

  double pixels_per_degree() const {
    const double width_cm = diagonal_inches * 2.54 * aspect_w / std::hypot(aspect_w, aspect_h);
    const double one_degree_cm = 2.0 * distance_cm * std::tan(0.5 * std::numbers::pi / 180.0);
    return one_degree_cm / width_cm * display_width_px;
  }
};

// Sigma of one degree of visual angle, scaled to a map `map_width` pixels wide.
inline double default_sigma_px(std::size_t map_width, const ViewingGeometry& g = {}) {
  return g.pixels_per_degree() * static_cast<double>(map_width) / g.display_width_px;
}

struct RenderConfig {
  double sigma = 0;  // pixels; 0 selects default_sigma_px(width)
  double truncate = 3.0;
};

struct RenderedMap {
  SaliencyMap map;
  bool empty = false;  // no in-bounds fixation; map is all zeros
};

inline RenderedMap render_saliency(const FixationSet& f, std::size_t height, std::size_t width, const RenderConfig& cfg = {}) {
  if (height == 0 || width == 0) throw ConfigError("render: map extents must be positive");
  const double sigma = cfg.sigma > 0 ? cfg.sigma : default_sigma_px(width);
  if (!(sigma > 0) || !std::isfinite(sigma)) throw ConfigError("render: sigma must be positive");
  if (!(cfg.truncate > 0)) throw ConfigError("render: truncation radius must be positive");
  RenderedMap out{SaliencyMap(height, width), false};
  const auto px = f.clipped(height, width).pixels(width);
  if (px.empty()) {
    out.empty = true;
    return out;
  }
  const double radius = cfg.truncate * sigma;
  const auto r = static_cast<std::int64_t>(std::floor(radius));
  const double inv = 1.0 / (2.0 * sigma * sigma);
  const auto H = static_cast<std::int64_t>(height), W = static_cast<std::int64_t>(width);
  for (auto i : px) {
    const auto cy = static_cast<std::int64_t>(i / width), cx = static_cast<std::int64_t>(i % width);
    for (std::int64_t y = std::max<std::int64_t>(0, cy - r); y <= std::min(H - 1, cy + r); ++y)
      for (std::int64_t x = std::max<std::int64_t>(0, cx - r); x <= std::min(W - 1, cx + r); ++x) {
        const double d2 = static_cast<double>((y - cy) * (y - cy) + (x - cx) * (x - cx));
        if (d2 <= radius * radius) out.map.values[static_cast<std::size_t>(y * W + x)] += std::exp(-d2 * inv);
      }
  }
  const double peak = *std::max_element(out.map.values.begin(), out.map.values.end());
  for (auto& v : out.map.values) v /= peak;
  return out;
}

}  // namespace npsnet
