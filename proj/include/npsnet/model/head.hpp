#pragma once

// Saliency decoder and training loss.
//
// Decoder layer i (1..6): trilinear resample to (T, ceil(H/div_i), ceil(W/div_i)),
// same-padded 3-D conv, ReLU (not on layer 6). Encoder taps are resampled to
// the current extents and concatenated along channels after their configured
// layer. Layer 6 emits one channel; the map is the mean over T passed through
// the logistic function.

#include <cmath>
#include <string>
#include <vector>

#include "npsnet/model/config.hpp"
#include "npsnet/model/encoders.hpp"
#include "npsnet/nn/layers.hpp"
#include "npsnet/types.hpp"

namespace npsnet {

template <class T>
class Decoder {
 public:
  Decoder() = default;

  static Decoder create(ParamStore<T>& store, const ModelConfig& cfg, std::size_t shallow_channels,
                        std::size_t deep_channels) {
    Decoder d;
    d.cfg_ = cfg.decoder;
    d.height_ = cfg.frame_height;
    d.width_ = cfg.frame_width;
    d.shallow_channels_ = shallow_channels;
    d.deep_channels_ = deep_channels;
    std::size_t c_in = cfg.fusion.channels;
    for (std::size_t i = 0; i < 6; ++i) {
      const auto& l = d.cfg_.layers[i];
      d.convs_.push_back(nn::Conv3d<T>::same(store, "decoder.layer" + std::to_string(i + 1), c_in, l.channels,
                                             {l.kernel, l.kernel, l.kernel}));
      c_in = l.channels;
      if (i + 1 == d.cfg_.deep_after) c_in += deep_channels;
      if (i + 1 == d.cfg_.shallow_after) c_in += shallow_channels;
    }
    return d;
  }

  std::pair<std::size_t, std::size_t> layer_extents(std::size_t layer) const {
    const std::size_t div = cfg_.layers.at(layer).divisor;
    return {(height_ + div - 1) / div, (width_ + div - 1) / div};
  }

  // Pre-logistic map [H, W].
  Tensor<T> logits(const Tensor<T>& features, const EncoderTaps<T>& taps) const {
    if (features.rank() != 4) throw DimensionError("decoder expects features [C,T,H,W], got " + to_string(features.shape()));
    Tensor<T> x = features;
    const std::size_t t = features.shape()[1];
    for (std::size_t i = 0; i < 6; ++i) {
      const auto [h, w] = layer_extents(i);
      x = trilinear_resample(x, {t, h, w});
      x = convs_[i](x);
      if (i < 5) x = relu(x);
      if (i + 1 == cfg_.deep_after) x = inject(x, taps.deep, deep_channels_, i, "deep");
      if (i + 1 == cfg_.shallow_after) x = inject(x, taps.shallow, shallow_channels_, i, "shallow");
    }
    return reshape(mean_axis(x, 1), Shape{height_, width_});
  }

  Tensor<T> operator()(const Tensor<T>& features, const EncoderTaps<T>& taps) const {
    return sigmoid(logits(features, taps));
  }

  std::vector<nn::Conv3d<T>>& layers() { return convs_; }

 private:
  Tensor<T> inject(const Tensor<T>& x, const Tensor<T>& tap, std::size_t expected, std::size_t layer, const char* which) const {
    if (!tap.defined() || tap.rank() != 4 || tap.shape()[0] != expected)
      throw ConfigError("decoder layer " + std::to_string(layer + 1) + ": " + which + " tap has " +
                        (tap.defined() ? to_string(tap.shape()) : std::string("no data")) + " but the layer was built for " +
                        std::to_string(expected) + " channels");
    const Extent3 e{x.shape()[1], x.shape()[2], x.shape()[3]};
    return concat<T>({x, trilinear_resample(tap, e)}, 0);
  }

  DecoderConfig cfg_;
  std::size_t height_ = 0, width_ = 0, shallow_channels_ = 0, deep_channels_ = 0;
  std::vector<nn::Conv3d<T>> convs_;
};

// KL divergence between sum-normalized maps with regularizer eps:
//
//   L = sum_xy q log(eps + q / (p + eps)),   p = P / sum(P), q = Q / sum(Q)
//
// Since sum(p + eps) = 1 + n*eps, Gibbs' inequality gives the floor
// L >= -log(1 + n*eps) for n pixels. Differentiable in P; Q is data.
template <class T>
Tensor<T> kld_loss(const Tensor<T>& pred, const Tensor<T>& target, double eps = 1e-8) {
  if (eps <= 0) throw ConfigError("kld_loss: eps must be positive");
  if (pred.shape() != target.shape())
    throw DimensionError("kld_loss: extents differ, " + to_string(pred.shape()) + " vs " + to_string(target.shape()));
  const std::size_t n = pred.numel();
  double sp = 0, sq = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sp += static_cast<double>(pred[i]);
    sq += static_cast<double>(target[i]);
  }
  if (!(sp > 0)) throw InputError("kld_loss: prediction has no positive mass");
  if (!(sq > 0)) throw InputError("kld_loss: target has no positive mass");
  std::vector<double> p(n), q(n);
  double loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = static_cast<double>(pred[i]) / sp;
    q[i] = static_cast<double>(target[i]) / sq;
    if (q[i] > 0) loss += q[i] * std::log(eps + q[i] / (p[i] + eps));
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(loss));
  if (detail::any_requires_grad<T>({&pred})) {
    detail::record(out, [pred, p, q, sp, eps, n](const std::vector<T>& g) {
      auto& gp = *detail::grad_sink(pred);
      std::vector<double> dp(n);
      double dot = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double pe = p[i] + eps;
        dp[i] = q[i] > 0 ? -q[i] * q[i] / (pe * (eps * pe + q[i])) : 0.0;
        dot += dp[i] * p[i];
      }
      const double up = static_cast<double>(g[0]);
      for (std::size_t i = 0; i < n; ++i) gp[i] += static_cast<T>(up * (dp[i] - dot) / sp);
    });
  }
  return out;
}

inline double kld_floor(std::size_t pixels, double eps) { return -std::log1p(static_cast<double>(pixels) * eps); }

inline double kld(const SaliencyMap& pred, const SaliencyMap& target, double eps = 1e-8) {
  if (!pred.same_extents(target)) throw DimensionError("kld: map extents differ");
  return kld_loss(Tensor<double>(Shape{pred.height, pred.width}, pred.values),
                  Tensor<double>(Shape{target.height, target.width}, target.values), eps)
      .item();
}

}  // namespace npsnet
