#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "npsnet/model/config.hpp"
#include "npsnet/model/ufm.hpp"
#include "npsnet/nn/layers.hpp"

namespace npsnet {

// Mono waveform. Multi-channel input is downmixed (channel mean) on load.
struct Waveform {
  std::vector<double> samples;
  std::size_t sample_rate = 16000;
};

// samples[n] *= 0.5 * (1 - cos(2*pi*n / (N-1)))
inline Waveform hanning_window(const Waveform& w) {
  const std::size_t n = w.samples.size();
  if (n < 2) throw InputError("hanning window needs at least 2 samples, got " + std::to_string(n));
  Waveform out = w;
  const double denom = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    // Exact zeros at both ends regardless of rounding in cos().
    const double gain = (i == 0 || i == n - 1) ? 0.0 : 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / denom));
    out.samples[i] *= gain;
  }
  return out;
}

// Low- and high-level video feature grids kept for decoder skips.
template <class T>
struct EncoderTaps {
  Tensor<T> shallow;  // after stage 1, [C1, T1, H1, W1]
  Tensor<T> deep;     // after the last stage
};

// Seven conv1d blocks (conv, ReLU; the stride does the downsampling) with a
// UFM after the configured block, then adaptive average pooling to k slots.
// Output h_a is [k, d_a].
template <class T>
class AudioNet {
 public:
  AudioNet() = default;

  static AudioNet create(ParamStore<T>& store, const ModelConfig& cfg) {
    AudioNet a;
    a.k_ = cfg.k;
    a.ufm_after_ = cfg.audio.ufm_after_block;
    a.channels_ = cfg.resolved_audio_channels();
    a.downsampling_ = cfg.audio_downsampling();
    std::size_t c_in = 1;
    for (std::size_t i = 0; i < a.channels_.size(); ++i) {
      const std::size_t kk = cfg.audio.kernels[i];
      a.blocks_.push_back(nn::Conv3d<T>::create(store, "audio.block" + std::to_string(i + 1), c_in, a.channels_[i],
                                                {1, 1, kk}, {1, 1, cfg.audio.strides[i]}, {0, 0, kk / 2}));
      c_in = a.channels_[i];
    }
    if (!cfg.ablation.no_ufm) {
      UfmConfig u;
      u.d_model = a.channels_[a.ufm_after_ - 1];
      u.heads = cfg.audio.ufm_heads;
      u.kernel = {cfg.audio.ufm_kernel};
      u.spatial_rank = 1;
      u.branches = cfg.ablation.branches;
      a.ufm_ = Ufm<T>::create(store, "ufm.audio", u);
    }
    return a;
  }

  std::size_t d_a() const { return channels_.back(); }
  // Shortest waveform whose final feature length still covers k slots.
  std::size_t min_samples() const { return (k_ - 1) * downsampling_ + 1; }

  // `samples` must already be windowed.
  Tensor<T> operator()(const Tensor<T>& samples) const {
    if (samples.rank() != 1) throw DimensionError("audio encoder expects a 1-D waveform");
    const std::size_t n = samples.numel();
    if (n < min_samples())
      throw InputError("waveform of " + std::to_string(n) + " samples is too short: the encoder downsamples by " +
                       std::to_string(downsampling_) + " and needs at least " + std::to_string(min_samples()) +
                       " samples for k=" + std::to_string(k_));
    Tensor<T> x = reshape(samples, Shape{1, 1, 1, n});
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      x = relu(blocks_[i](x));
      if (i + 1 == ufm_after_ && ufm_) {
        const std::size_t c = x.shape()[0], len = x.shape()[3];
        TokenMap<T> tm{grid_to_tokens(reshape(x, Shape{c, len})), {len}};
        x = reshape(tokens_to_grid((*ufm_)(tm).tokens, tm.layout), Shape{c, 1, 1, len});
      }
    }
    Tensor<T> pooled = adaptive_avg_pool3d(x, {1, 1, k_});
    return transpose(reshape(pooled, Shape{d_a(), k_}));
  }

  const std::optional<Ufm<T>>& ufm() const { return ufm_; }

 private:
  std::size_t k_ = 1, ufm_after_ = 5, downsampling_ = 1;
  std::vector<std::size_t> channels_;
  std::vector<nn::Conv3d<T>> blocks_;
  std::optional<Ufm<T>> ufm_;
};

// Non-overlapping windows over a (T,H,W) token layout; the last window along
// an axis is shorter when the extent is not a multiple of the window.
inline std::vector<std::vector<std::size_t>> window_partition(const Shape& layout, Extent3 window) {
  const std::size_t t = layout[0], h = layout[1], w = layout[2];
  const std::size_t wt = std::min(window.t, t), wh = std::min(window.h, h), ww = std::min(window.w, w);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t a = 0; a < t; a += wt)
    for (std::size_t b = 0; b < h; b += wh)
      for (std::size_t c = 0; c < w; c += ww) {
        std::vector<std::size_t> idx;
        for (std::size_t i = a; i < std::min(a + wt, t); ++i)
          for (std::size_t j = b; j < std::min(b + wh, h); ++j)
            for (std::size_t l = c; l < std::min(c + ww, w); ++l) idx.push_back((i * h + j) * w + l);
        out.push_back(std::move(idx));
      }
  return out;
}

// Pre-norm transformer block whose attention is restricted to local windows.
template <class T>
struct WindowedBlock {
  nn::TransformerBlock<T> block;
  Extent3 window;

  Tensor<T> operator()(const TokenMap<T>& x) const {
    const auto windows = window_partition(x.layout, window);
    Tensor<T> h = block.norm1(x.tokens);
    Tensor<T> att;
    if (windows.size() == 1) {
      att = block.attn(h, h);
    } else {
      std::vector<Tensor<T>> parts;
      std::vector<std::size_t> order;
      for (const auto& idx : windows) {
        Tensor<T> hw = index_select(h, idx);
        parts.push_back(block.attn(hw, hw));
        order.insert(order.end(), idx.begin(), idx.end());
      }
      std::vector<std::size_t> inverse(order.size());
      for (std::size_t i = 0; i < order.size(); ++i) inverse[order[i]] = i;
      att = index_select(concat(parts, 0), inverse);
    }
    Tensor<T> y = add(x.tokens, att);
    return add(y, block.mlp(block.norm2(y)));
  }
};

// Simplified video swin encoder: strided 3-D patch embedding, then stages of
// {patch merging (stages 2+), windowed attention blocks}. A UFM follows the
// configured stage. Spatial extents halve (rounding up) at every merge; the
// temporal extent stays at k / patch.t.
template <class T>
class VideoNet {
 public:
  struct Stage {
    std::optional<nn::LayerNorm<T>> merge_norm;
    std::optional<nn::Linear<T>> merge_reduce;
    std::vector<WindowedBlock<T>> blocks;
  };

  VideoNet() = default;

  static VideoNet create(ParamStore<T>& store, const ModelConfig& cfg) {
    VideoNet v;
    v.cfg_ = cfg;
    v.dims_ = cfg.resolved_video_dims();
    v.embed_ = nn::Conv3d<T>::create(store, "video.embed", 3, v.dims_[0], cfg.video.patch, cfg.video.patch, {0, 0, 0});
    for (std::size_t s = 0; s < v.dims_.size(); ++s) {
      const std::string name = "video.stage" + std::to_string(s + 1);
      Stage st;
      if (s > 0) {
        st.merge_norm = nn::LayerNorm<T>::create(store, name + ".merge.norm", 4 * v.dims_[s - 1]);
        st.merge_reduce = nn::Linear<T>::create(store, name + ".merge.reduce", 4 * v.dims_[s - 1], v.dims_[s], false);
      }
      for (std::size_t b = 0; b < cfg.video.depths[s]; ++b)
        st.blocks.push_back({nn::TransformerBlock<T>::create(store, name + ".block" + std::to_string(b + 1), v.dims_[s],
                                                             cfg.video.heads[s], cfg.video.mlp_ratio),
                             cfg.video.window});
      v.stages_.push_back(std::move(st));
    }
    if (!cfg.ablation.no_ufm) {
      UfmConfig u;
      u.d_model = v.dims_[cfg.video.ufm_after_stage - 1];
      u.heads = cfg.video.ufm_heads;
      u.kernel = {cfg.video.ufm_kernel.t, cfg.video.ufm_kernel.h, cfg.video.ufm_kernel.w};
      u.spatial_rank = 3;
      u.branches = cfg.ablation.branches;
      v.ufm_ = Ufm<T>::create(store, "ufm.video", u);
    }
    return v;
  }

  std::size_t d_v() const { return dims_.back(); }
  const std::vector<std::size_t>& dims() const { return dims_; }

  // Grid extents (T, H, W) after each stage for the configured input.
  std::vector<Extent3> stage_extents() const {
    std::vector<Extent3> out;
    Extent3 e{cfg_.k / cfg_.video.patch.t, cfg_.frame_height / cfg_.video.patch.h, cfg_.frame_width / cfg_.video.patch.w};
    for (std::size_t s = 0; s < dims_.size(); ++s) {
      if (s > 0) e = {e.t, (e.h + 1) / 2, (e.w + 1) / 2};
      out.push_back(e);
    }
    return out;
  }

  // frames [k, 3, H, W] -> h_v [k, d_v] and the skip taps.
  std::pair<Tensor<T>, EncoderTaps<T>> operator()(const Tensor<T>& frames) const {
    const auto& p = cfg_.video.patch;
    if (frames.rank() != 4 || frames.shape()[1] != 3)
      throw DimensionError("video encoder expects frames [k,3,H,W], got " + to_string(frames.shape()));
    const std::size_t k = frames.shape()[0], h = frames.shape()[2], w = frames.shape()[3];
    if (k % p.t || h % p.h || w % p.w)
      throw ConfigError("clip extents (k,H,W)=(" + std::to_string(k) + "," + std::to_string(h) + "," + std::to_string(w) +
                        ") must be divisible by the patch size " + to_string(p));
    Tensor<T> grid = embed_(permute(frames, {1, 0, 2, 3}));
    EncoderTaps<T> taps;
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      const auto& st = stages_[s];
      if (st.merge_norm) {
        Tensor<T> merged = merge_patches_2x2(grid);
        const Shape layout(merged.shape().begin() + 1, merged.shape().end());
        grid = tokens_to_grid((*st.merge_reduce)((*st.merge_norm)(grid_to_tokens(merged))), layout);
      }
      TokenMap<T> tm{grid_to_tokens(grid), Shape(grid.shape().begin() + 1, grid.shape().end())};
      for (const auto& b : st.blocks) tm.tokens = b(tm);
      if (ufm_ && s + 1 == cfg_.video.ufm_after_stage) tm = (*ufm_)(tm);
      grid = tokens_to_grid(tm.tokens, tm.layout);
      if (s == 0) taps.shallow = grid;
    }
    taps.deep = grid;
    // Spatial mean per time slot, then linear interpolation in time to k rows.
    const std::size_t c = grid.shape()[0], t = grid.shape()[1];
    Tensor<T> per_slot = adaptive_avg_pool3d(grid, {t, 1, 1});
    Tensor<T> slots = trilinear_resample(per_slot, {k, 1, 1});
    return {transpose(reshape(slots, Shape{c, k})), taps};
  }

  const std::optional<Ufm<T>>& ufm() const { return ufm_; }

 private:
  ModelConfig cfg_;
  std::vector<std::size_t> dims_;
  nn::Conv3d<T> embed_;
  std::vector<Stage> stages_;
  std::optional<Ufm<T>> ufm_;
};

}  // namespace npsnet
