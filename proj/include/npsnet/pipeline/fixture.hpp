#pragma once

// Synthetic desk-scale dataset: a bright disc drifts over a dark background
// in alternating move/hold segments, a sine tone plays while it moves, and
// simulated observers look at the disc with per-observer bias and per-sample
// jitter. Output follows the manifest layout, plus the raw gaze.csv.

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "npsnet/core/random.hpp"
#include "npsnet/io/image.hpp"
#include "npsnet/io/wav.hpp"
#include "npsnet/pipeline/gaze.hpp"
#include "npsnet/pipeline/manifest.hpp"

namespace npsnet {

struct SynthSpec {
  std::size_t cartoon_videos = 1;
  std::size_t game_videos = 0;
  std::vector<std::string> cartoon_categories{"toon"};
  std::vector<std::string> game_categories{"arcade"};
  std::size_t frames = 16;
  std::size_t height = 32, width = 56;
  double fps = 30;
  std::size_t sample_rate = 8000;
  double tone_hz = 440;
  std::size_t observers = 20;
  double gaze_hz = 60;
  double jitter_px = 1.0;   // per-sample gaze noise (std)
  double bias_px = 0.5;     // per-observer constant offset (std)
  double blob_radius = 4.0;
  double speed_px = 1.5;    // per frame while moving
  double sigma = 2.5;       // ground-truth render sigma recorded in the manifest
  std::uint64_t seed = 0;
};

struct BlobTrack {
  std::vector<double> x, y;
  std::vector<bool> moving;
};

inline BlobTrack blob_track(const SynthSpec& s, const std::string& video) {
  Rng rng = named_rng(s.seed, "synth/track/" + video);
  BlobTrack t;
  const double margin = s.blob_radius + 1;
  const double lo_x = margin, hi_x = static_cast<double>(s.width) - 1 - margin;
  const double lo_y = margin, hi_y = static_cast<double>(s.height) - 1 - margin;
  double x = lo_x < hi_x ? rng.uniform(lo_x, hi_x) : static_cast<double>(s.width) / 2;
  double y = lo_y < hi_y ? rng.uniform(lo_y, hi_y) : static_cast<double>(s.height) / 2;
  const double angle = rng.uniform(0, 2 * std::numbers::pi);
  double vx = s.speed_px * std::cos(angle), vy = s.speed_px * std::sin(angle);
  bool moving = true;
  std::size_t left = 3 + rng.below(6);
  for (std::size_t f = 0; f < s.frames; ++f) {
    if (left == 0) {
      moving = !moving;
      left = 3 + rng.below(6);
    }
    --left;
    if (moving && f > 0) {
      x += vx;
      y += vy;
      if (x < lo_x || x > hi_x) {
        vx = -vx;
        x = std::clamp(x, std::min(lo_x, hi_x), std::max(lo_x, hi_x));
      }
      if (y < lo_y || y > hi_y) {
        vy = -vy;
        y = std::clamp(y, std::min(lo_y, hi_y), std::max(lo_y, hi_y));
      }
    }
    t.x.push_back(x);
    t.y.push_back(y);
    t.moving.push_back(moving);
  }
  return t;
}

inline Image synth_frame(const SynthSpec& s, double cx, double cy) {
  Image img{s.height, s.width, 3, std::vector<float>(s.height * s.width * 3)};
  for (std::size_t yy = 0; yy < s.height; ++yy)
    for (std::size_t xx = 0; xx < s.width; ++xx) {
      const double bg = 0.12 + 0.08 * static_cast<double>(xx + yy) / static_cast<double>(s.width + s.height);
      const double d = std::hypot(static_cast<double>(xx) - cx, static_cast<double>(yy) - cy);
      const bool in = d <= s.blob_radius;
      float* px = &img.data[(yy * s.width + xx) * 3];
      px[0] = static_cast<float>(in ? 1.0 : bg);
      px[1] = static_cast<float>(in ? 0.85 : bg);
      px[2] = static_cast<float>(in ? 0.3 : bg + 0.05);
    }
  return img;
}

inline Waveform synth_audio(const SynthSpec& s, const BlobTrack& t) {
  Waveform w;
  w.sample_rate = s.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(static_cast<double>(s.frames) * static_cast<double>(s.sample_rate) / s.fps));
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double time = static_cast<double>(i) / static_cast<double>(s.sample_rate);
    const auto f = std::min<std::size_t>(static_cast<std::size_t>(time * s.fps), s.frames - 1);
    w.samples[i] = t.moving[f] ? 0.5 * std::sin(2 * std::numbers::pi * s.tone_hz * time) : 0.0;
  }
  return w;
}

inline std::vector<GazeSample> synth_gaze(const SynthSpec& s, const BlobTrack& t, const std::string& video) {
  Rng rng = named_rng(s.seed, "synth/gaze/" + video);
  std::vector<double> bx(s.observers), by(s.observers);
  for (std::size_t o = 0; o < s.observers; ++o) {
    bx[o] = s.bias_px * rng.normal();
    by[o] = s.bias_px * rng.normal();
  }
  std::vector<GazeSample> rows;
  const double duration_ms = static_cast<double>(s.frames) * 1000.0 / s.fps;
  for (std::size_t i = 0;; ++i) {
    // Written with 3 decimals, rounded up so the text value stays in frame.
    const double ts = std::ceil(static_cast<double>(i) * 1000.0 / s.gaze_hz * 1000.0) / 1000.0;
    if (ts >= duration_ms) break;
    const auto f = std::min<std::size_t>(static_cast<std::size_t>(frame_of(ts, s.fps)), s.frames - 1);
    for (std::size_t o = 0; o < s.observers; ++o) {
      GazeSample g;
      g.timestamp_ms = ts;
      g.observer = static_cast<std::int64_t>(o);
      // +0.5 moves from pixel-index to continuous coordinates.
      g.x = std::round((t.x[f] + 0.5 + bx[o] + s.jitter_px * rng.normal()) * 1000.0) / 1000.0;
      g.y = std::round((t.y[f] + 0.5 + by[o] + s.jitter_px * rng.normal()) * 1000.0) / 1000.0;
      rows.push_back(g);
    }
  }
  return rows;
}

inline std::string frame_file_name(std::size_t f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu.ppm", f);
  return buf;
}

// Writes the dataset and a manifest.json at `root`; returns the manifest.
inline DatasetManifest synth_fixture(const std::filesystem::path& root, const SynthSpec& s) {
  namespace fs = std::filesystem;
  if (s.frames == 0 || s.height == 0 || s.width == 0) throw ConfigError("synth: frames and extents must be positive");
  if (s.fps <= 0 || s.sample_rate == 0 || s.gaze_hz <= 0) throw ConfigError("synth: rates must be positive");
  if (s.cartoon_videos + s.game_videos == 0) throw ConfigError("synth: at least one video is required");
  if ((s.cartoon_videos && s.cartoon_categories.empty()) || (s.game_videos && s.game_categories.empty()))
    throw ConfigError("synth: every populated domain needs at least one category");
  auto make_domain = [&](const std::string& domain, std::size_t count, const std::vector<std::string>& cats) {
    for (std::size_t v = 0; v < count; ++v) {
      const std::string cat = cats[v % cats.size()];
      char name[32];
      std::snprintf(name, sizeof name, "v%03zu", v);
      const std::string id = domain + "/" + cat + "/" + name;
      const fs::path dir = root / domain / cat / name;
      fs::create_directories(dir / "frames");
      const BlobTrack track = blob_track(s, id);
      for (std::size_t f = 0; f < s.frames; ++f) write_image(dir / "frames" / frame_file_name(f), synth_frame(s, track.x[f], track.y[f]));
      write_wav(dir / "audio.wav", synth_audio(s, track));
      const auto gaze = synth_gaze(s, track, id);
      detail::write_file_bytes(dir / "gaze.csv", format_gaze_csv(gaze));
      // Ingest from the written text so fixations match what `ingest` would produce.
      const auto ingested = ingest_gaze(parse_gaze_csv(format_gaze_csv(gaze)), {s.fps, s.width, s.height, false});
      write_fixation_csv(dir / "fixations.csv", ingested.frames);
    }
  };
  make_domain("cartoon", s.cartoon_videos, s.cartoon_categories);
  make_domain("game", s.game_videos, s.game_categories);
  DatasetManifest m = build_manifest(root, s.seed, s.sigma, s.fps);
  write_manifest(root / "manifest.json", m);
  return m;
}

}  // namespace npsnet
