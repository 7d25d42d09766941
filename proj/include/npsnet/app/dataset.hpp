#pragma once

// Turns manifest videos into model-ready clip samples.
//
// A sample targets frame j of a video and feeds frames j-k+1..j together with
// the audio covering the same span. Frames are resized to the model extents;
// fixations are rescaled from frame resolution and rendered at model
// resolution with the manifest sigma scaled by the same factor.

#include <cmath>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "npsnet/io/image.hpp"
#include "npsnet/io/wav.hpp"
#include "npsnet/model/config.hpp"
#include "npsnet/model/npsnet.hpp"
#include "npsnet/pipeline/gaze.hpp"
#include "npsnet/pipeline/manifest.hpp"
#include "npsnet/pipeline/render.hpp"

namespace npsnet {

struct SampleRef {
  std::size_t video = 0;  // index into the loader's video list
  std::size_t frame = 0;  // target frame
};

struct ClipSample {
  ClipInput input;
  SaliencyMap gt;
  FixationSet fixations;  // at model resolution
  std::string video_id;
  std::string domain;
  std::size_t frame = 0;
};

// Resolves the directory manifest paths are relative to: the manifest's own
// directory when the listed files are there, else the recorded root.
inline std::filesystem::path manifest_root(const DatasetManifest& m, const std::filesystem::path& manifest_path) {
  const std::filesystem::path here = manifest_path.parent_path().empty() ? std::filesystem::path(".") : manifest_path.parent_path();
  if (m.videos.empty() || std::filesystem::exists(here / m.videos.front().fixations)) return here;
  if (!m.root.empty() && std::filesystem::is_directory(m.root)) return m.root;
  return here;
}

class ClipLoader {
 public:
  ClipLoader(const DatasetManifest& manifest, std::filesystem::path root, const ModelConfig& cfg,
             std::optional<Split> split)
      : manifest_(manifest), root_(std::move(root)), cfg_(cfg) {
    for (const auto* v : manifest_.select(split)) videos_.push_back(v);
  }

  const std::vector<const VideoEntry*>& videos() const { return videos_; }

  // Targets with at least k frames of history and a nonempty fixation set.
  std::vector<SampleRef> samples() {
    std::vector<SampleRef> out;
    for (std::size_t v = 0; v < videos_.size(); ++v) {
      const auto& fix = fixations(v);
      for (std::size_t f = cfg_.k - 1; f < videos_[v]->frames; ++f) {
        const auto it = fix.find(static_cast<std::int64_t>(f));
        if (it != fix.end() && !it->second.points.empty()) out.push_back({v, f});
      }
    }
    return out;
  }

  const std::map<std::int64_t, FixationSet>& fixations(std::size_t v) {
    auto it = fixations_.find(v);
    if (it == fixations_.end()) it = fixations_.emplace(v, read_fixation_csv(root_ / videos_.at(v)->fixations)).first;
    return it->second;
  }

  // Native frame extents of a video (from its first frame).
  std::pair<std::size_t, std::size_t> frame_extents(std::size_t v) {
    auto it = extents_.find(v);
    if (it == extents_.end()) {
      const Image img = read_image(root_ / videos_.at(v)->frame_files.at(0));
      it = extents_.emplace(v, std::make_pair(img.height, img.width)).first;
    }
    return it->second;
  }

  // Fixations of frame f at model resolution (empty set when none).
  FixationSet model_fixations(std::size_t v, std::size_t f) {
    const auto& fix = fixations(v);
    const auto it = fix.find(static_cast<std::int64_t>(f));
    if (it == fix.end()) return FixationSet{static_cast<std::int64_t>(f), {}};
    const auto [h, w] = frame_extents(v);
    return rescale_fixations(it->second, h, w, cfg_.frame_height, cfg_.frame_width).clipped(cfg_.frame_height, cfg_.frame_width);
  }

  double render_sigma(std::size_t v) {
    if (manifest_.sigma <= 0) return default_sigma_px(cfg_.frame_width);
    const auto [h, w] = frame_extents(v);
    (void)h;
    return manifest_.sigma * static_cast<double>(cfg_.frame_width) / static_cast<double>(w);
  }

  SaliencyMap ground_truth(std::size_t v, std::size_t f) {
    return render_saliency(model_fixations(v, f), cfg_.frame_height, cfg_.frame_width, {render_sigma(v), 3.0}).map;
  }

  ClipSample load(const SampleRef& r) {
    const VideoEntry& e = *videos_.at(r.video);
    if (r.frame + 1 < cfg_.k || r.frame >= e.frames)
      throw InputError(e.id + ": frame " + std::to_string(r.frame) + " lacks " + std::to_string(cfg_.k) + " frames of history");
    ClipSample s;
    s.video_id = e.id;
    s.domain = e.domain;
    s.frame = r.frame;
    const std::size_t H = cfg_.frame_height, W = cfg_.frame_width, k = cfg_.k;
    std::vector<float> px(k * 3 * H * W);
    for (std::size_t i = 0; i < k; ++i) {
      const Image& img = frame(r.video, r.frame + 1 - k + i);
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = 0; x < W; ++x) px[((i * 3 + c) * H + y) * W + x] = img.at(y, x, c);
    }
    s.input.frames = Tensor<float>(Shape{k, 3, H, W}, std::move(px));
    s.input.audio = audio_window(r.video, r.frame + 1 - k);
    s.fixations = model_fixations(r.video, r.frame);
    s.gt = ground_truth(r.video, r.frame);
    return s;
  }

  // Loads frames first..first+k-1 of an explicit clip directory.
  static ClipInput load_clip_dir(const std::filesystem::path& dir, std::size_t last_frame, const ModelConfig& cfg,
                                 double fps) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    if (!fs::is_directory(dir / "frames")) throw InputError(dir.string() + ": missing frames/ directory");
    for (const auto& e : fs::directory_iterator(dir / "frames"))
      if (e.is_regular_file() && is_frame_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (last_frame >= files.size())
      throw InputError(dir.string() + ": frame " + std::to_string(last_frame) + " requested but only " +
                       std::to_string(files.size()) + " frames exist");
    if (last_frame + 1 < cfg.k)
      throw InputError("frame " + std::to_string(last_frame) + " lacks " + std::to_string(cfg.k) + " frames of history");
    const std::size_t H = cfg.frame_height, W = cfg.frame_width, k = cfg.k;
    std::vector<float> px(k * 3 * H * W);
    for (std::size_t i = 0; i < k; ++i) {
      const Image img = to_rgb(resize_bilinear(read_image(files[last_frame + 1 - k + i]), H, W));
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = 0; x < W; ++x) px[((i * 3 + c) * H + y) * W + x] = img.at(y, x, c);
    }
    ClipInput in;
    in.frames = Tensor<float>(Shape{k, 3, H, W}, std::move(px));
    in.audio = slice_audio(resample_linear(read_wav(dir / "audio.wav"), cfg.audio.sample_rate), last_frame + 1 - k, cfg, fps);
    return in;
  }

  // Audio span starting at frame `first`, zero-padded past the end.
  static Waveform slice_audio(const Waveform& w, std::size_t first, const ModelConfig& cfg, double fps) {
    Waveform out;
    out.sample_rate = cfg.audio.sample_rate;
    const auto start = static_cast<std::size_t>(std::llround(static_cast<double>(first) * static_cast<double>(w.sample_rate) / fps));
    const std::size_t n = cfg.audio_samples();
    out.samples.assign(n, 0.0);
    for (std::size_t i = 0; i < n && start + i < w.samples.size(); ++i) out.samples[i] = w.samples[start + i];
    return out;
  }

 private:
  const Image& frame(std::size_t v, std::size_t f) {
    auto it = frames_.find(v);
    if (it == frames_.end()) {
      if (frames_.size() >= kCachedVideos) {
        frames_.erase(cache_order_.front());
        cache_order_.pop_front();
      }
      it = frames_.emplace(v, std::vector<std::optional<Image>>(videos_[v]->frames)).first;
      cache_order_.push_back(v);
    }
    auto& slot = it->second.at(f);
    if (!slot) slot = to_rgb(resize_bilinear(read_image(root_ / videos_[v]->frame_files.at(f)), cfg_.frame_height, cfg_.frame_width));
    return *slot;
  }

  Waveform audio_window(std::size_t v, std::size_t first) {
    auto it = audio_.find(v);
    if (it == audio_.end())
      it = audio_.emplace(v, resample_linear(read_wav(root_ / videos_[v]->audio), cfg_.audio.sample_rate)).first;
    return slice_audio(it->second, first, cfg_, manifest_.fps);
  }

  static constexpr std::size_t kCachedVideos = 8;
  const DatasetManifest& manifest_;
  std::filesystem::path root_;
  ModelConfig cfg_;
  std::vector<const VideoEntry*> videos_;
  std::map<std::size_t, std::map<std::int64_t, FixationSet>> fixations_;
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> extents_;
  std::map<std::size_t, std::vector<std::optional<Image>>> frames_;
  std::deque<std::size_t> cache_order_;
  std::map<std::size_t, Waveform> audio_;
};

}  // namespace npsnet
