#pragma once

// Universal frequency-aware module. Three parallel branches over a token map
// X [tokens, d] that remembers its spatial layout:
//
//   high    : depthwise_conv(refold(FC(X)))       short-range detail
//   low     : MSA(X)                              long-range context
//   channel : FC(mean_over_tokens(X)) (.) X       per-channel gating
//
// Branch outputs are combined by the configured fuse rule (element-wise sum).
// A module with no enabled branch is the identity map.

#include <string>
#include <vector>

#include "npsnet/nn/layers.hpp"

namespace npsnet {

// Features in token form plus the spatial extents they unfold from
// (row-major over T, H, W for video; a single length axis for audio).
template <class T>
struct TokenMap {
  Tensor<T> tokens;  // [prod(layout), d]
  Shape layout;
};

enum class FuseRule { Sum };

struct BranchMask {
  bool high = true, low = true, channel = true;
  bool any() const { return high || low || channel; }
  friend bool operator==(const BranchMask&, const BranchMask&) = default;
};

struct UfmConfig {
  std::size_t d_model = 8;
  std::size_t heads = 1;
  Shape kernel{3};  // odd extents, one per spatial axis
  std::size_t spatial_rank = 1;
  FuseRule fuse = FuseRule::Sum;
  BranchMask branches;

  void validate(const std::string& where) const {
    if (spatial_rank != 1 && spatial_rank != 2 && spatial_rank != 3)
      throw ConfigError(where + ": spatial_rank must be 1, 2 or 3");
    if (kernel.size() != spatial_rank)
      throw ConfigError(where + ": kernel needs " + std::to_string(spatial_rank) + " extents, got " + to_string(kernel));
    for (auto k : kernel)
      if (k % 2 == 0) throw ConfigError(where + ": kernel extents must be odd, got " + to_string(kernel));
    if (heads == 0 || d_model % heads != 0)
      throw ConfigError(where + ": d_model " + std::to_string(d_model) + " not divisible by heads " + std::to_string(heads));
  }
};

namespace detail {
inline Extent3 lift3(const Shape& s) {
  if (s.size() == 1) return {1, 1, s[0]};
  if (s.size() == 2) return {1, s[0], s[1]};
  return {s[0], s[1], s[2]};
}
}  // namespace detail

// Depthwise same-padded convolution over x[C, spatial...] with kernel
// [C, k...] for 1-, 2- or 3-D spatial layouts.
template <class T>
Tensor<T> depthwise_conv(const Tensor<T>& x, const Tensor<T>& kernel) {
  const std::size_t rank = x.rank() - 1;
  if (rank < 1 || rank > 3 || kernel.rank() != rank + 1)
    throw DimensionError("depthwise_conv: input " + to_string(x.shape()) + " and kernel " + to_string(kernel.shape()) +
                         " ranks disagree");
  const std::size_t c = x.shape()[0];
  if (kernel.shape()[0] != c)
    throw DimensionError("depthwise_conv: kernel has " + std::to_string(kernel.shape()[0]) + " slices for " +
                         std::to_string(c) + " channels");
  const Shape ks(kernel.shape().begin() + 1, kernel.shape().end());
  for (auto k : ks)
    if (k % 2 == 0) throw ConfigError("depthwise_conv: kernel extents must be odd, got " + to_string(ks));
  const Extent3 sp = detail::lift3(Shape(x.shape().begin() + 1, x.shape().end()));
  const Extent3 k3 = detail::lift3(ks);
  Tensor<T> xg = reshape(x, Shape{c, sp.t, sp.h, sp.w});
  Tensor<T> wg = reshape(kernel, Shape{c, 1, k3.t, k3.h, k3.w});
  Tensor<T> y = conv3d(xg, wg, Tensor<T>(), {1, 1, 1}, {k3.t / 2, k3.h / 2, k3.w / 2}, c);
  return reshape(y, x.shape());
}

template <class T>
class Ufm {
 public:
  Ufm() = default;

  // Parameters are registered only for enabled branches, under `name`.
  static Ufm create(ParamStore<T>& store, const std::string& name, const UfmConfig& cfg) {
    cfg.validate(name);
    Ufm u;
    u.cfg_ = cfg;
    u.name_ = name;
    const std::size_t d = cfg.d_model;
    if (cfg.branches.high) {
      u.high_fc_ = nn::Linear<T>::create(store, name + ".high.fc", d, d);
      Shape ks{d};
      std::size_t vol = 1;
      for (auto k : cfg.kernel) {
        ks.push_back(k);
        vol *= k;
      }
      u.high_kernel_ = store.add(name + ".high.conv.weight", ks, Init::Uniform, vol);
    }
    if (cfg.branches.low) u.low_msa_ = nn::MultiHeadAttention<T>::create(store, name + ".low.msa", d, d, d, d, cfg.heads);
    if (cfg.branches.channel) u.channel_fc_ = nn::Linear<T>::create(store, name + ".channel.fc", d, d);
    return u;
  }

  const UfmConfig& config() const { return cfg_; }
  nn::Linear<T>& high_fc() { return high_fc_; }
  Tensor<T>& high_kernel() { return high_kernel_; }
  nn::MultiHeadAttention<T>& low_msa() { return low_msa_; }
  nn::Linear<T>& channel_fc() { return channel_fc_; }

  Tensor<T> high_branch(const TokenMap<T>& x) const {
    require_branch(cfg_.branches.high, "high");
    check_tokens(x);
    if (x.layout.empty() || numel(x.layout) != x.tokens.shape()[0])
      throw UsageError("ufm high branch: token map has no spatial layout matching its " +
                       std::to_string(x.tokens.shape()[0]) + " tokens");
    if (x.layout.size() != cfg_.spatial_rank)
      throw UsageError("ufm high branch: layout " + to_string(x.layout) + " does not have rank " +
                       std::to_string(cfg_.spatial_rank));
    Tensor<T> grid = tokens_to_grid(high_fc_(x.tokens), x.layout);
    MacScope scope(name_ + ".high.conv");
    return grid_to_tokens(depthwise_conv(grid, high_kernel_));
  }

  Tensor<T> low_branch(const TokenMap<T>& x) const {
    require_branch(cfg_.branches.low, "low");
    check_tokens(x);
    return low_msa_(x.tokens, x.tokens);
  }

  Tensor<T> channel_gate(const TokenMap<T>& x) const {
    require_branch(cfg_.branches.channel, "channel");
    check_tokens(x);
    return channel_fc_(mean_axis(x.tokens, 0));
  }

  Tensor<T> channel_branch(const TokenMap<T>& x) const { return mul(x.tokens, channel_gate(x)); }

  // Shape-preserving; identity when no branch is enabled.
  TokenMap<T> operator()(const TokenMap<T>& x) const {
    check_tokens(x);
    if (!cfg_.branches.any()) return x;
    Tensor<T> out;
    auto accumulate = [&](const Tensor<T>& b) { out = out.defined() ? add(out, b) : b; };
    if (cfg_.branches.high) accumulate(high_branch(x));
    if (cfg_.branches.low) accumulate(low_branch(x));
    if (cfg_.branches.channel) accumulate(channel_branch(x));
    return {out, x.layout};
  }

 private:
  static void require_branch(bool enabled, const char* which) {
    if (!enabled) throw UsageError(std::string("ufm ") + which + " branch is disabled in this configuration");
  }
  void check_tokens(const TokenMap<T>& x) const {
    if (x.tokens.rank() != 2 || x.tokens.shape()[1] != cfg_.d_model)
      throw DimensionError("ufm: tokens " + to_string(x.tokens.shape()) + " do not have width d_model=" +
                           std::to_string(cfg_.d_model));
  }

  UfmConfig cfg_;

  std::string name_;
  nn::Linear<T> high_fc_;
  Tensor<T> high_kernel_;
  nn::MultiHeadAttention<T> low_msa_;
  nn::Linear<T> channel_fc_;
};

}  // namespace npsnet
