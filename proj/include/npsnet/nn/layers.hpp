#pragma once

#include <cmath>
#include <string>

#include "npsnet/core/ops.hpp"
#include "npsnet/core/params.hpp"

namespace npsnet::nn {

// Fully connected layer along the last axis: y = x W + b, W is [d_in, d_out].
template <class T>
struct Linear {
  std::string name;
  Tensor<T> weight, bias;
  std::size_t d_in = 0, d_out = 0;

  static Linear create(ParamStore<T>& store, const std::string& name, std::size_t d_in, std::size_t d_out,
                       bool with_bias = true) {
    Linear l;
    l.name = name;
    l.d_in = d_in;
    l.d_out = d_out;
    l.weight = store.add(name + ".weight", {d_in, d_out}, Init::Uniform, d_in);
    if (with_bias) l.bias = store.add(name + ".bias", {d_out}, Init::Zeros);
    return l;
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    if (x.rank() == 0 || x.shape().back() != d_in)
      throw DimensionError(name + ": input " + to_string(x.shape()) + " does not end in d_in=" + std::to_string(d_in));
    MacScope scope(name);
    const bool vec = x.rank() == 1;
    Tensor<T> y = matmul(vec ? reshape(x, Shape{1, d_in}) : x, weight);
    if (bias.defined()) y = add(y, bias);
    return vec ? reshape(y, Shape{d_out}) : y;
  }
};

template <class T>
struct LayerNorm {
  Tensor<T> gamma, beta;

  static LayerNorm create(ParamStore<T>& store, const std::string& name, std::size_t d) {
    return {store.add(name + ".gamma", {d}, Init::Ones), store.add(name + ".beta", {d}, Init::Zeros)};
  }
  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma, beta); }
};

// 3-D convolution over [C,T,H,W] grids.
template <class T>
struct Conv3d {
  std::string name;
  Tensor<T> weight, bias;
  Extent3 kernel, stride{1, 1, 1}, pad;
  std::size_t groups = 1;

  static Conv3d create(ParamStore<T>& store, const std::string& name, std::size_t c_in, std::size_t c_out,
                       Extent3 kernel, Extent3 stride, Extent3 pad, std::size_t groups = 1, bool with_bias = true) {
    if (groups == 0 || c_in % groups || c_out % groups)
      throw ConfigError(name + ": channels " + std::to_string(c_in) + "->" + std::to_string(c_out) +
                        " not divisible by groups " + std::to_string(groups));
    Conv3d c;
    c.name = name;
    c.kernel = kernel;
    c.stride = stride;
    c.pad = pad;
    c.groups = groups;
    const std::size_t fan_in = (c_in / groups) * kernel.volume();
    c.weight = store.add(name + ".weight", {c_out, c_in / groups, kernel.t, kernel.h, kernel.w}, Init::Uniform, fan_in);
    if (with_bias) c.bias = store.add(name + ".bias", {c_out}, Init::Zeros);
    return c;
  }

  // Odd kernel with stride 1 and half-kernel padding: spatial extents preserved.
  static Conv3d same(ParamStore<T>& store, const std::string& name, std::size_t c_in, std::size_t c_out,
                     Extent3 kernel, std::size_t groups = 1, bool with_bias = true) {
    if (kernel.t % 2 == 0 || kernel.h % 2 == 0 || kernel.w % 2 == 0)
      throw ConfigError(name + ": same-padded convolution needs odd kernel extents, got " + to_string(kernel));
    return create(store, name, c_in, c_out, kernel, {1, 1, 1}, {kernel.t / 2, kernel.h / 2, kernel.w / 2}, groups,
                  with_bias);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    MacScope scope(name);
    return conv3d(x, weight, bias, stride, pad, groups);
  }
};

// softmax(Q K^T / sqrt(d_head)) V per head, heads concatenated, then an
// output projection. Query and key/value inputs may have different widths.
template <class T>
struct MultiHeadAttention {
  std::string name;
  Linear<T> q, k, v, o;
  std::size_t heads = 1, dim = 0;

  static MultiHeadAttention create(ParamStore<T>& store, const std::string& name, std::size_t d_query,
                                   std::size_t d_kv, std::size_t dim, std::size_t d_out, std::size_t heads) {
    if (heads == 0 || dim % heads != 0)
      throw ConfigError(name + ": attention width " + std::to_string(dim) + " is not divisible by " +
                        std::to_string(heads) + " heads");
    MultiHeadAttention m;
    m.name = name;
    m.heads = heads;
    m.dim = dim;
    m.q = Linear<T>::create(store, name + ".q", d_query, dim);
    m.k = Linear<T>::create(store, name + ".k", d_kv, dim);
    m.v = Linear<T>::create(store, name + ".v", d_kv, dim);
    m.o = Linear<T>::create(store, name + ".o", dim, d_out);
    return m;
  }

  // Attention weights [heads, Tq, Tk] for inspection.
  Tensor<T> weights(const Tensor<T>& query, const Tensor<T>& kv) const { return attend(query, kv).second; }

  Tensor<T> operator()(const Tensor<T>& query, const Tensor<T>& kv) const { return o(attend(query, kv).first); }

 private:
  Tensor<T> split_heads(const Tensor<T>& x) const {
    const std::size_t n = x.shape()[0];
    return permute(reshape(x, Shape{n, heads, dim / heads}), {1, 0, 2});
  }

  std::pair<Tensor<T>, Tensor<T>> attend(const Tensor<T>& query, const Tensor<T>& kv) const {
    if (query.rank() != 2 || kv.rank() != 2)
      throw DimensionError(name + ": attention expects [tokens, d] inputs");
    const std::size_t tq = query.shape()[0];
    Tensor<T> qh = split_heads(q(query));
    Tensor<T> kh = split_heads(k(kv));
    Tensor<T> vh = split_heads(v(kv));
    MacScope scope(name + ".core");
    const T inv_sqrt = T{1} / std::sqrt(static_cast<T>(dim / heads));
    Tensor<T> att = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), -1);
    Tensor<T> ctx = reshape(permute(matmul(att, vh), {1, 0, 2}), Shape{tq, dim});
    return {ctx, att};
  }
};

template <class T>
struct Mlp {
  Linear<T> fc1, fc2;

  static Mlp create(ParamStore<T>& store, const std::string& name, std::size_t d, std::size_t hidden) {
    return {Linear<T>::create(store, name + ".fc1", d, hidden), Linear<T>::create(store, name + ".fc2", hidden, d)};
  }
  Tensor<T> operator()(const Tensor<T>& x) const { return fc2(gelu(fc1(x))); }
};

// Pre-norm transformer block: x + MSA(LN(x)), then x + MLP(LN(x)).
template <class T>
struct TransformerBlock {
  LayerNorm<T> norm1, norm2;
  MultiHeadAttention<T> attn;
  Mlp<T> mlp;

  static TransformerBlock create(ParamStore<T>& store, const std::string& name, std::size_t d, std::size_t heads,
                                 std::size_t mlp_ratio) {
    return {LayerNorm<T>::create(store, name + ".norm1", d), LayerNorm<T>::create(store, name + ".norm2", d),
            MultiHeadAttention<T>::create(store, name + ".attn", d, d, d, d, heads),
            Mlp<T>::create(store, name + ".mlp", d, d * mlp_ratio)};
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    Tensor<T> h = norm1(x);
    Tensor<T> y = add(x, attn(h, h));
    return add(y, mlp(norm2(y)));
  }
};

}  // namespace npsnet::nn
