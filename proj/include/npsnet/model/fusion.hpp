#pragma once

// Audio-visual interaction and the fusion encoder.
//
//   A_l[t,o] = sum_{i,j} h_a[t,i] W[i,o,j] h_v[t,j] + b[o]     (per time step)
//   A_h      = MCA(query = h_v, key = value = h_a)
//   A        = A_l + A_h                                        [k, d_o]
//
// The fusion encoder adds a fixed sinusoidal positional encoding, runs
// pre-norm transformer blocks over the k tokens, broadcasts each token over a
// 1 x lattice_h x lattice_w tile (token t fills time slice t), applies one 3-D
// convolution and adaptive-average-pools to the configured feature extents.

#include <cmath>
#include <string>
#include <vector>

#include "npsnet/model/config.hpp"
#include "npsnet/nn/layers.hpp"

namespace npsnet {

template <class T>
struct BilinearParams {
  Tensor<T> weight;  // [d_a, d_o, d_v]
  Tensor<T> bias;    // [d_o]

  static BilinearParams create(ParamStore<T>& store, const std::string& name, std::size_t d_a, std::size_t d_o,
                               std::size_t d_v) {
    return {store.add(name + ".weight", {d_a, d_o, d_v}, Init::Uniform, d_a * d_v),
            store.add(name + ".bias", {d_o}, Init::Zeros)};
  }
};

template <class T>
Tensor<T> bilinear_affinity(const Tensor<T>& h_a, const Tensor<T>& h_v, const BilinearParams<T>& p) {
  if (p.weight.rank() != 3) throw DimensionError("bilinear weight must be [d_a, d_o, d_v]");
  const std::size_t d_a = p.weight.shape()[0], d_o = p.weight.shape()[1], d_v = p.weight.shape()[2];
  if (h_a.rank() != 2 || h_a.shape()[1] != d_a)
    throw DimensionError("bilinear: d_a disagrees, h_a is " + to_string(h_a.shape()) + " but W expects d_a=" + std::to_string(d_a));
  if (h_v.rank() != 2 || h_v.shape()[1] != d_v)
    throw DimensionError("bilinear: d_v disagrees, h_v is " + to_string(h_v.shape()) + " but W expects d_v=" + std::to_string(d_v));
  if (p.bias.numel() != d_o)
    throw DimensionError("bilinear: d_o disagrees, bias has " + std::to_string(p.bias.numel()) + " entries but W has d_o=" +
                         std::to_string(d_o));
  const std::size_t k = h_a.shape()[0];
  if (h_v.shape()[0] != k)
    throw DimensionError("bilinear: h_a has " + std::to_string(k) + " rows but h_v has " + std::to_string(h_v.shape()[0]));
  MacScope scope("fusion.bilinear");
  // (h_a W) -> [k, d_o, d_v], contract d_v against h_v per row.
  Tensor<T> aw = reshape(matmul(h_a, reshape(p.weight, Shape{d_a, d_o * d_v})), Shape{k, d_o, d_v});
  Tensor<T> prod = mul(aw, reshape(h_v, Shape{k, 1, d_v}));
  count_macs(static_cast<std::uint64_t>(k) * d_o * d_v);
  return add(sum_axis(prod, 2), p.bias);
}

template <class T>
Tensor<T> fuse_affinity(const Tensor<T>& a_l, const Tensor<T>& a_h) {
  if (a_l.shape() != a_h.shape())
    throw DimensionError("affinity shapes differ: " + to_string(a_l.shape()) + " vs " + to_string(a_h.shape()));
  return add(a_l, a_h);
}

// PE[t, 2i] = sin(t / 10000^(2i/d)), PE[t, 2i+1] = cos(t / 10000^(2i/d)).
template <class T>
Tensor<T> positional_encoding(std::size_t k, std::size_t d) {
  if (k == 0 || d == 0) throw ConfigError("positional encoding needs k, d >= 1");
  Tensor<T> pe(Shape{k, d});
  for (std::size_t t = 0; t < k; ++t)
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t i2 = j - (j % 2);
      const double angle = static_cast<double>(t) / std::pow(10000.0, static_cast<double>(i2) / static_cast<double>(d));
      pe[t * d + j] = static_cast<T>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  return pe;
}

template <class T>
class FusionEncoder {
 public:
  FusionEncoder() = default;

  static FusionEncoder create(ParamStore<T>& store, const FusionConfig& cfg) {
    FusionEncoder f;
    f.cfg_ = cfg;
    for (std::size_t b = 0; b < cfg.blocks; ++b)
      f.blocks_.push_back(nn::TransformerBlock<T>::create(store, "fusion.encoder.block" + std::to_string(b + 1), cfg.d_o,
                                                          cfg.heads, cfg.mlp_ratio));
    const std::size_t kk = cfg.conv_kernel;
    f.conv_ = nn::Conv3d<T>::same(store, "fusion.conv", cfg.d_o, cfg.channels, {kk, kk, kk});
    return f;
  }

  // Transformer stage only: [k, d_o] -> [k, d_o].
  Tensor<T> tokens(const Tensor<T>& a, bool with_positional_encoding = true) const {
    if (a.rank() != 2 || a.shape()[1] != cfg_.d_o)
      throw DimensionError("fusion encoder expects [k, " + std::to_string(cfg_.d_o) + "], got " + to_string(a.shape()));
    Tensor<T> x = with_positional_encoding ? add(a, positional_encoding<T>(a.shape()[0], cfg_.d_o)) : a;
    for (const auto& b : blocks_) x = b(x);
    return x;
  }

  // [k, d_o] -> saliency features [C_f, T_f, H_f, W_f].
  Tensor<T> operator()(const Tensor<T>& a, bool with_positional_encoding = true) const {
    const std::size_t k = a.shape().at(0);
    if (cfg_.target.t > k)
      throw ConfigError("fusion lattice: " + std::to_string(k) + " tokens cannot be pooled to T_f=" +
                        std::to_string(cfg_.target.t));
    Tensor<T> x = tokens(a, with_positional_encoding);
    Tensor<T> lattice = expand(reshape(transpose(x), Shape{cfg_.d_o, k, 1, 1}), Shape{cfg_.d_o, k, cfg_.lattice_h, cfg_.lattice_w});
    return adaptive_avg_pool3d(conv_(lattice), cfg_.target);
  }

  const FusionConfig& config() const { return cfg_; }

 private:
  FusionConfig cfg_;
  std::vector<nn::TransformerBlock<T>> blocks_;
  nn::Conv3d<T> conv_;
};

}  // namespace npsnet
