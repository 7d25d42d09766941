#pragma once

// Gaze logs and per-frame fixation files.
//
// Gaze log CSV:  timestamp_ms,observer,x,y   (one row per eye-tracker sample)
// Fixation CSV:  frame,observer,x,y          (integer pixel coordinates)
//
// A sample at time t lands in frame floor(t * fps / 1000). Within a frame
// each observer contributes its latest sample unless per-sample mode keeps
// them all. Coordinates are floored to pixels; pixels outside
// [0, width) x [0, height) are dropped and counted.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "npsnet/core/checkpoint.hpp"
#include "npsnet/core/errors.hpp"
#include "npsnet/types.hpp"

namespace npsnet {

struct GazeSample {
  double timestamp_ms = 0;
  std::int64_t observer = 0;
  double x = 0, y = 0;
  std::size_t line = 0;  // 1-based source line, 0 when built in memory
};

struct IngestConfig {
  double fps = 30;
  std::size_t width = 0, height = 0;
  bool per_sample = false;
};

struct IngestResult {
  std::map<std::int64_t, FixationSet> frames;
  std::size_t samples = 0;
  std::size_t dropped = 0;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

inline bool parse_double(const std::string& s, double& v) {
  try {
    std::size_t used = 0;
    v = std::stod(s, &used);
    return used == s.size() && std::isfinite(v);
  } catch (const std::exception&) {
    return false;
  }
}

inline bool parse_int(const std::string& s, std::int64_t& v) {
  try {
    std::size_t used = 0;
    v = std::stoll(s, &used);
    return used == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

// Collects "line N: reason" entries and throws once, listing up to 20.
struct RowErrors {
  std::string what;
  std::vector<std::string> items;
  void add(std::size_t line, const std::string& reason) { items.push_back("line " + std::to_string(line) + ": " + reason); }
  void raise_if_any() const {
    if (items.empty()) return;
    std::string msg = what + ": " + std::to_string(items.size()) + " malformed row(s)";
    for (std::size_t i = 0; i < items.size() && i < 20; ++i) msg += "\n  " + items[i];
    if (items.size() > 20) msg += "\n  ...";
    throw InputError(msg);
  }
};

template <class RowFn>
void for_each_csv_row(const std::string& text, const std::string& header, const std::string& what, RowFn fn) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  RowErrors errors{what, {}};
  while (std::getline(in, line)) {
    ++n;
    line = trim(line);
    if (line.empty()) continue;
    if (n == 1 && line == header) continue;
    auto cells = split_csv_line(line);
    for (auto& c : cells) c = trim(c);
    if (cells.size() != 4) {
      errors.add(n, "expected 4 fields, found " + std::to_string(cells.size()));
      continue;
    }
    std::string reason = fn(cells, n);
    if (!reason.empty()) errors.add(n, reason);
  }
  errors.raise_if_any();
}

}  // namespace detail

inline constexpr const char* kGazeHeader = "timestamp_ms,observer,x,y";
inline constexpr const char* kFixationHeader = "frame,observer,x,y";

inline std::vector<GazeSample> parse_gaze_csv(const std::string& text, const std::string& what = "gaze log") {
  std::vector<GazeSample> rows;
  detail::for_each_csv_row(text, kGazeHeader, what, [&](const std::vector<std::string>& c, std::size_t line) -> std::string {
    GazeSample s;
    s.line = line;
    if (!detail::parse_double(c[0], s.timestamp_ms) || s.timestamp_ms < 0) return "bad timestamp '" + c[0] + "'";
    if (!detail::parse_int(c[1], s.observer)) return "bad observer id '" + c[1] + "'";
    if (!detail::parse_double(c[2], s.x)) return "bad x '" + c[2] + "'";
    if (!detail::parse_double(c[3], s.y)) return "bad y '" + c[3] + "'";
    rows.push_back(s);
    return {};
  });
  return rows;
}

inline std::vector<GazeSample> read_gaze_csv(const std::filesystem::path& path) {
  return parse_gaze_csv(detail::read_file_bytes(path), path.string());
}

inline std::string format_gaze_csv(const std::vector<GazeSample>& rows) {
  std::ostringstream out;
  out << kGazeHeader << "\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.3f,%lld,%.3f,%.3f\n", r.timestamp_ms, static_cast<long long>(r.observer), r.x, r.y);
    out << buf;
  }
  return out.str();
}

inline std::int64_t frame_of(double timestamp_ms, double fps) {
  return static_cast<std::int64_t>(std::floor(timestamp_ms * fps / 1000.0));
}

inline IngestResult ingest_gaze(const std::vector<GazeSample>& rows, const IngestConfig& cfg) {
  if (cfg.fps <= 0) throw ConfigError("ingest: fps must be positive");
  if (cfg.width == 0 || cfg.height == 0) throw ConfigError("ingest: frame extents must be positive");
  detail::RowErrors errors{"gaze log", {}};
  std::map<std::int64_t, double> last_time;
  for (const auto& r : rows) {
    auto [it, fresh] = last_time.emplace(r.observer, r.timestamp_ms);
    if (!fresh) {
      if (r.timestamp_ms < it->second)
        errors.add(r.line, "timestamp " + std::to_string(r.timestamp_ms) + " goes backwards for observer " +
                               std::to_string(r.observer));
      it->second = r.timestamp_ms;
    }
  }
  errors.raise_if_any();

  IngestResult res;
  // frame -> observer -> kept points (latest sample, or all samples).
  std::map<std::int64_t, std::map<std::int64_t, std::vector<Fixation>>> kept;
  for (const auto& r : rows) {
    ++res.samples;
    const auto px = static_cast<std::int64_t>(std::floor(r.x));
    const auto py = static_cast<std::int64_t>(std::floor(r.y));
    if (px < 0 || py < 0 || px >= static_cast<std::int64_t>(cfg.width) || py >= static_cast<std::int64_t>(cfg.height)) {
      ++res.dropped;
      continue;
    }
    auto& slot = kept[frame_of(r.timestamp_ms, cfg.fps)][r.observer];
    if (!cfg.per_sample) slot.clear();
    slot.push_back({px, py, r.observer});
  }
  for (auto& [frame, observers] : kept) {
    FixationSet set{frame, {}};
    for (auto& [obs, pts] : observers) set.points.insert(set.points.end(), pts.begin(), pts.end());
    set.deduplicate();
    res.frames.emplace(frame, std::move(set));
  }
  return res;
}

inline std::string format_fixation_csv(const std::map<std::int64_t, FixationSet>& frames) {
  std::ostringstream out;
  out << kFixationHeader << "\n";
  for (const auto& [frame, set] : frames)
    for (const auto& p : set.points) out << frame << "," << p.observer << "," << p.x << "," << p.y << "\n";
  return out.str();
}

inline void write_fixation_csv(const std::filesystem::path& path, const std::map<std::int64_t, FixationSet>& frames) {
  detail::write_file_bytes(path, format_fixation_csv(frames));
}

inline std::map<std::int64_t, FixationSet> parse_fixation_csv(const std::string& text, const std::string& what = "fixations") {
  std::map<std::int64_t, FixationSet> frames;
  detail::for_each_csv_row(text, kFixationHeader, what, [&](const std::vector<std::string>& c, std::size_t) -> std::string {
    std::int64_t f, o, x, y;
    if (!detail::parse_int(c[0], f) || f < 0) return "bad frame '" + c[0] + "'";
    if (!detail::parse_int(c[1], o)) return "bad observer id '" + c[1] + "'";
    if (!detail::parse_int(c[2], x)) return "bad x '" + c[2] + "'";
    if (!detail::parse_int(c[3], y)) return "bad y '" + c[3] + "'";
    auto& set = frames[f];
    set.frame = f;
    set.points.push_back({x, y, o});
    return {};
  });
  for (auto& [f, set] : frames) set.deduplicate();
  return frames;
}

inline std::map<std::int64_t, FixationSet> read_fixation_csv(const std::filesystem::path& path) {
  return parse_fixation_csv(detail::read_file_bytes(path), path.string());
}

// Maps fixations recorded at one resolution onto another (pixel centres).
inline FixationSet rescale_fixations(const FixationSet& f, std::size_t from_h, std::size_t from_w, std::size_t to_h,
                                     std::size_t to_w) {
  if (from_h == to_h && from_w == to_w) return f;
  FixationSet out{f.frame, {}};
  for (const auto& p : f.points) {
    const auto x = static_cast<std::int64_t>(std::floor((static_cast<double>(p.x) + 0.5) * static_cast<double>(to_w) / static_cast<double>(from_w)));
    const auto y = static_cast<std::int64_t>(std::floor((static_cast<double>(p.y) + 0.5) * static_cast<double>(to_h) / static_cast<double>(from_h)));
    out.points.push_back({x, y, p.observer});
  }
  out.deduplicate();
  return out;
}

}  // namespace npsnet
