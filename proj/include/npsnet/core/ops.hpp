#pragma once

// Differentiable operators. Every op computes its forward value eagerly and,
// when a tape is active and an input requires gradients, records a closure
// that accumulates input gradients from the output gradient.
//
// Conventions shared by all spatial ops:
//   * feature grids are channels-first [C, T, H, W]; 1-D and 2-D data are
//     lifted to this layout with singleton axes
//   * convolution is cross-correlation with symmetric zero padding
//   * resampling uses the align_corners=false convention:
//       src = (dst + 0.5) * in / out - 0.5, clamped below at 0,
//       i0 = floor(src), i1 = min(i0 + 1, in - 1), weight(i1) = src - i0

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "npsnet/core/macs.hpp"
#include "npsnet/core/tensor.hpp"

namespace npsnet {

namespace detail {

inline Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw DimensionError("cannot broadcast shapes " + to_string(a) + " and " + to_string(b));
    out[i] = std::max(da, db);
  }
  return out;
}

inline std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> s(out.size(), 0);
  const auto st = strides_of(in);
  const std::size_t off = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i) s[i + off] = in[i] == 1 ? 0 : st[i];
  return s;
}

template <class F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t n = numel(out), r = out.size();
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < n; ++o) {
    f(o, ia, ib);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

inline std::size_t normalize_axis(long axis, std::size_t rank) {
  const long r = static_cast<long>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return static_cast<std::size_t>(axis);
}

// Elementwise binary op with numpy broadcasting. `da`/`db` return the partial
// derivatives given (a, b).
template <class T, class F, class DA, class DB>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, F f, DA da, DB db) {
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  Tensor<T> out(out_shape);
  auto& o = out.values();
  const auto& av = a.values();
  const auto& bv = b.values();
  const bool same = a.shape() == b.shape();
  std::vector<std::size_t> sa, sb;
  if (same) {
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(av[i], bv[i]);
  } else {
    sa = broadcast_strides(a.shape(), out_shape);
    sb = broadcast_strides(b.shape(), out_shape);
    for_each_broadcast(out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) { o[i] = f(av[ia], bv[ib]); });
  }
  if (any_requires_grad<T>({&a, &b})) {
    record(out, [a, b, out_shape, same, sa, sb, da, db](const std::vector<T>& g) {
      auto* ga = grad_sink(a);
      auto* gb = grad_sink(b);
      const auto& av = a.values();
      const auto& bv = b.values();
      if (same) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (ga) (*ga)[i] += g[i] * da(av[i], bv[i]);
          if (gb) (*gb)[i] += g[i] * db(av[i], bv[i]);
        }
      } else {
        for_each_broadcast(out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
          if (ga) (*ga)[ia] += g[i] * da(av[ia], bv[ib]);
          if (gb) (*gb)[ib] += g[i] * db(av[ia], bv[ib]);
        });
      }
    });
  }
  return out;
}

// Elementwise unary op; `df(x, y)` is dy/dx given input x and output y.
template <class T, class F, class DF>
Tensor<T> unary(const Tensor<T>& x, F f, DF df) {
  Tensor<T> out(x.shape());
  auto& o = out.values();
  const auto& xv = x.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(xv[i]);
  if (any_requires_grad<T>({&x})) {
    Tensor<T> y = out;
    record(out, [x, df, yn = y.node().get()](const std::vector<T>& g) {
      auto& gx = *grad_sink(x);
      const auto& xv = x.values();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i], yn->value[i]);
    });
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(
      a, b, [](T x, T y) { return x + y; }, [](T, T) { return T{1}; }, [](T, T) { return T{1}; });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(
      a, b, [](T x, T y) { return x - y; }, [](T, T) { return T{1}; }, [](T, T) { return T{-1}; });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(
      a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return detail::unary(x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  return detail::unary(x, [s](T v) { return v + s; }, [](T, T) { return T{1}; });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return v > T{0} ? v : T{0}; }, [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

// Exact (erf-based) GELU.
template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  return detail::unary(
      x, [](T v) { return static_cast<T>(0.5 * v * (1.0 + std::erf(v * inv_sqrt2))); },
      [](T v, T) {
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        return static_cast<T>(cdf + v * inv_sqrt2pi * std::exp(-0.5 * v * v));
      });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(
      x,
      [](T v) {
        if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
        const T e = std::exp(v);
        return e / (T{1} + e);
      },
      [](T, T y) { return y * (T{1} - y); });
}

// ---------------------------------------------------------------- structure

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel())
    throw DimensionError("cannot reshape " + to_string(x.shape()) + " to " + to_string(shape));
  Tensor<T> out(std::move(shape), x.values());
  if (detail::any_requires_grad<T>({&x})) {
    detail::record(out, [x](const std::vector<T>& g) {
      auto& gx = *detail::grad_sink(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  const std::size_t r = x.rank();
  if (perm.size() != r) throw DimensionError("permutation rank mismatch for shape " + to_string(x.shape()));
  std::vector<bool> seen(r, false);
  for (auto p : perm) {
    if (p >= r || seen[p]) throw DimensionError("invalid permutation");
    seen[p] = true;
  }
  Shape out_shape(r);
  const auto in_strides = strides_of(x.shape());
  std::vector<std::size_t> src_strides(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = x.shape()[perm[i]];
    src_strides[i] = in_strides[perm[i]];
  }
  Tensor<T> out(out_shape);
  auto& o = out.values();
  const auto& xv = x.values();
  const std::vector<std::size_t> zero(r, 0);
  detail::for_each_broadcast(out_shape, src_strides, zero,
                             [&](std::size_t i, std::size_t src, std::size_t) { o[i] = xv[src]; });
  if (detail::any_requires_grad<T>({&x})) {
    detail::record(out, [x, out_shape, src_strides, zero](const std::vector<T>& g) {
      auto& gx = *detail::grad_sink(x);
      detail::for_each_broadcast(out_shape, src_strides, zero,
                                 [&](std::size_t i, std::size_t src, std::size_t) { gx[src] += g[i]; });
    });
  }
  return out;
}

template <class T>
Tensor<T> transpose(const Tensor<T>& x, long a0 = -2, long a1 = -1) {
  std::vector<std::size_t> perm(x.rank());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::swap(perm[detail::normalize_axis(a0, x.rank())], perm[detail::normalize_axis(a1, x.rank())]);
  return permute(x, perm);
}

// Broadcasts x to `shape` (numpy rules).
template <class T>
Tensor<T> expand(const Tensor<T>& x, const Shape& shape) {
  if (detail::broadcast_shapes(x.shape(), shape) != shape)
    throw DimensionError("cannot expand " + to_string(x.shape()) + " to " + to_string(shape));
  return add(x, Tensor<T>::zeros(shape));
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, long axis_in) {
  if (xs.empty()) throw UsageError("concat of zero tensors");
  const std::size_t r = xs[0].rank();
  const std::size_t axis = detail::normalize_axis(axis_in, r);
  Shape out_shape = xs[0].shape();
  out_shape[axis] = 0;
  for (const auto& x : xs) {
    if (x.rank() != r) throw DimensionError("concat rank mismatch");
    for (std::size_t d = 0; d < r; ++d)
      if (d != axis && x.shape()[d] != xs[0].shape()[d])
        throw DimensionError("concat extents disagree: " + to_string(xs[0].shape()) + " vs " + to_string(x.shape()));
    out_shape[axis] += x.shape()[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= out_shape[d];
  for (std::size_t d = axis + 1; d < r; ++d) inner *= out_shape[d];
  Tensor<T> out(out_shape);
  auto& o = out.values();
  const std::size_t row = out_shape[axis] * inner;
  std::size_t offset = 0;
  for (const auto& x : xs) {
    const std::size_t block = x.shape()[axis] * inner;
    for (std::size_t i = 0; i < outer; ++i)
      std::copy_n(x.values().begin() + i * block, block, o.begin() + i * row + offset);
    offset += block;
  }
  bool need = false;
  for (const auto& x : xs) need = need || detail::any_requires_grad<T>({&x});
  if (need) {
    detail::record(out, [xs, outer, inner, row, axis](const std::vector<T>& g) {
      std::size_t offset = 0;
      for (const auto& x : xs) {
        const std::size_t block = x.shape()[axis] * inner;
        if (auto* gx = detail::grad_sink(x))
          for (std::size_t i = 0; i < outer; ++i)
            for (std::size_t j = 0; j < block; ++j) (*gx)[i * block + j] += g[i * row + offset + j];
        offset += block;
      }
    });
  }
  return out;
}

// x[..., begin:end, ...] along `axis`.
template <class T>
Tensor<T> slice(const Tensor<T>& x, long axis_in, std::size_t begin, std::size_t end) {
  const std::size_t axis = detail::normalize_axis(axis_in, x.rank());
  if (begin >= end || end > x.shape()[axis])
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " +
                         to_string(x.shape()));
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= out_shape[d];
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= out_shape[d];
  const std::size_t in_row = x.shape()[axis] * inner, out_row = out_shape[axis] * inner;
  Tensor<T> out(out_shape);
  auto& o = out.values();
  for (std::size_t i = 0; i < outer; ++i)
    std::copy_n(x.values().begin() + i * in_row + begin * inner, out_row, o.begin() + i * out_row);
  if (detail::any_requires_grad<T>({&x})) {
    detail::record(out, [x, outer, inner, in_row, out_row, begin](const std::vector<T>& g) {
      auto& gx = *detail::grad_sink(x);
      for (std::size_t i = 0; i < outer; ++i)
        for (std::size_t j = 0; j < out_row; ++j) gx[i * in_row + begin * inner + j] += g[i * out_row + j];
    });
  }
  return out;
}

// Gathers rows (axis 0) in the given order.
template <class T>
Tensor<T> index_select(const Tensor<T>& x, const std::vector<std::size_t>& rows) {
  if (x.rank() < 1 || rows.empty()) throw DimensionError("index_select needs rank >= 1 and a nonempty index");
  const std::size_t n = x.shape()[0];
  const std::size_t inner = x.numel() / n;
  for (auto r : rows)
    if (r >= n) throw DimensionError("index_select row " + std::to_string(r) + " out of range");
  Shape out_shape = x.shape();
  out_shape[0] = rows.size();
  Tensor<T> out(out_shape);
  auto& o = out.values();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(x.values().begin() + rows[i] * inner, inner, o.begin() + i * inner);
  if (detail::any_requires_grad<T>({&x})) {
    detail::record(out, [x, rows, inner](const std::vector<T>& g) {
      auto& gx = *detail::grad_sink(x);
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < inner; ++j) gx[rows[i] * inner + j] += g[i * inner + j];
    });
  }
  return out;
}

// ---------------------------------------------------------------- reductions

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T s{0};
  for (T v : x.values()) s += v;
  Tensor<T> out = Tensor<T>::scalar(s);
  if (detail::any_requires_grad<T>({&x})) {
    detail::record(out, [x](const std::vector<T>& g) {
      auto& gx = *detail::grad_sink(x);
      for (auto& v : gx) v += g[0];
    });
  }
  return out;
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T{1} / static_cast<T>(x.numel()));
}

template <class T>
Tensor<T> sum_axis(const Tensor<T>& x, long axis_in, bool keepdim = false) {
  const std::size_t axis = detail::normalize_axis(axis_in, x.rank());
  std::size_t outer = 1, inner = 1;
  const std::size_t n = x.shape()[axis];
  for (std::size_t d = 0; d < axis; ++d) outer *= x.shape()[d];
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.shape()[d];
  Shape out_shape = x.shape();
  if (keepdim)
    out_shape[axis] = 1;
  else
    out_shape.erase(out_shape.begin() + static_cast<long>(axis));
  Tensor<T> out(out_shape);
  auto& o = out.values();
  const auto& xv = x.values();
  for (std::size_t i = 0; i < outer; ++i)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < inner; ++j) o[i * inner + j] += xv[(i * n + k) * inner + j];
  if (detail::any_requires_grad<T>({&x})) {
    detail::record(out, [x, outer, inner, n](const std::vector<T>& g) {
      auto& gx = *detail::grad_sink(x);
      for (std::size_t i = 0; i < outer; ++i)
        for (std::size_t k = 0; k < n; ++k)
          for (std::size_t j = 0; j < inner; ++j) gx[(i * n + k) * inner + j] += g[i * inner + j];
    });
  }
  return out;
}

template <class T>
Tensor<T> mean_axis(const Tensor<T>& x, long axis, bool keepdim = false) {
  const std::size_t n = x.shape()[detail::normalize_axis(axis, x.rank())];
  return scale(sum_axis(x, axis, keepdim), T{1} / static_cast<T>(n));
}

// Numerically stable softmax (max subtraction) along `axis`.
template <class T>
Tensor<T> softmax(const Tensor<T>& x, long axis_in = -1) {
  const std::size_t axis = detail::normalize_axis(axis_in, x.rank());
  std::size_t outer = 1, inner = 1;
  const std::size_t n = x.shape()[axis];
  for (std::size_t d = 0; d < axis; ++d) outer *= x.shape()[d];
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.shape()[d];
  Tensor<T> out(x.shape());
  auto& o = out.values();
  const auto& xv = x.values();
  for (std::size_t i = 0; i < outer; ++i)
    for (std::size_t j = 0; j < inner; ++j) {
      const std::size_t base = i * n * inner + j;
      T mx = xv[base];
      for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, xv[base + k * inner]);
      T s{0};
      for (std::size_t k = 0; k < n; ++k) s += (o[base + k * inner] = std::exp(xv[base + k * inner] - mx));
      for (std::size_t k = 0; k < n; ++k) o[base + k * inner] /= s;
    }
  if (detail::any_requires_grad<T>({&x})) {
    detail::record(out, [x, yn = out.node().get(), outer, inner, n](const std::vector<T>& g) {
      auto& gx = *detail::grad_sink(x);
      const auto& y = yn->value;
      for (std::size_t i = 0; i < outer; ++i)
        for (std::size_t j = 0; j < inner; ++j) {
          const std::size_t base = i * n * inner + j;
          T dot{0};
          for (std::size_t k = 0; k < n; ++k) dot += g[base + k * inner] * y[base + k * inner];
          for (std::size_t k = 0; k < n; ++k) gx[base + k * inner] += y[base + k * inner] * (g[base + k * inner] - dot);
        }
    });
  }
  return out;
}

// ---------------------------------------------------------------- linear algebra

// Batched matrix product a[..., m, p] x b[..., p, n] with broadcast batch axes.
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2)
    throw DimensionError("matmul needs rank >= 2 operands, got " + to_string(a.shape()) + " and " + to_string(b.shape()));
  const std::size_t m = a.shape()[a.rank() - 2], p = a.shape()[a.rank() - 1];
  const std::size_t p2 = b.shape()[b.rank() - 2], n = b.shape()[b.rank() - 1];
  if (p != p2)
    throw DimensionError("matmul inner extents differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const Shape a_batch(a.shape().begin(), a.shape().end() - 2);
  const Shape b_batch(b.shape().begin(), b.shape().end() - 2);
  Shape batch;
  try {
    batch = detail::broadcast_shapes(a_batch, b_batch);
  } catch (const DimensionError&) {
    throw DimensionError("matmul batch extents incompatible: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  // Offsets (in matrices) of each operand per batch element.
  std::vector<std::size_t> a_off, b_off;
  {
    const auto sa = detail::broadcast_strides(a_batch, batch);
    const auto sb = detail::broadcast_strides(b_batch, batch);
    detail::for_each_broadcast(batch, sa, sb, [&](std::size_t, std::size_t ia, std::size_t ib) {
      a_off.push_back(ia);
      b_off.push_back(ib);
    });
  }
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor<T> out(out_shape);
  auto& o = out.values();
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t bi = 0; bi < a_off.size(); ++bi) {
    const T* A = av.data() + a_off[bi] * m * p;
    const T* B = bv.data() + b_off[bi] * p * n;
    T* C = o.data() + bi * m * n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = 0; k < p; ++k) {
        const T aik = A[i * p + k];
        if (aik == T{0}) continue;
        for (std::size_t j = 0; j < n; ++j) C[i * n + j] += aik * B[k * n + j];
      }
  }
  count_macs(static_cast<std::uint64_t>(a_off.size()) * m * p * n);
  if (detail::any_requires_grad<T>({&a, &b})) {
    detail::record(out, [a, b, a_off, b_off, m, p, n](const std::vector<T>& g) {
      auto* ga = detail::grad_sink(a);
      auto* gb = detail::grad_sink(b);
      const auto& av = a.values();
      const auto& bv = b.values();
      for (std::size_t bi = 0; bi < a_off.size(); ++bi) {
        const T* G = g.data() + bi * m * n;
        const T* A = av.data() + a_off[bi] * m * p;
        const T* B = bv.data() + b_off[bi] * p * n;
        if (ga) {
          T* GA = ga->data() + a_off[bi] * m * p;
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t k = 0; k < p; ++k) {
              T s{0};
              for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * B[k * n + j];
              GA[i * p + k] += s;
            }
        }
        if (gb) {
          T* GB = gb->data() + b_off[bi] * p * n;
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t k = 0; k < p; ++k) {
              const T aik = A[i * p + k];
              if (aik == T{0}) continue;
              for (std::size_t j = 0; j < n; ++j) GB[k * n + j] += aik * G[i * n + j];
            }
        }
      }
    });
  }
  return out;
}

// Layer normalization over the last axis (population variance).
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d)
    throw DimensionError("layer_norm affine parameters must have " + std::to_string(d) + " entries");
  const std::size_t rows = x.numel() / d;
  Tensor<T> out(x.shape());
  std::vector<T> xhat(x.numel()), inv_std(rows);
  const auto& xv = x.values();
  auto& o = out.values();
  for (std::size_t r = 0; r < rows; ++r) {
    T mu{0}, var{0};
    for (std::size_t j = 0; j < d; ++j) mu += xv[r * d + j];
    mu /= static_cast<T>(d);
    for (std::size_t j = 0; j < d; ++j) var += (xv[r * d + j] - mu) * (xv[r * d + j] - mu);
    var /= static_cast<T>(d);
    inv_std[r] = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (xv[r * d + j] - mu) * inv_std[r];
      o[r * d + j] = xhat[r * d + j] * gamma[j] + beta[j];
    }
  }
  if (detail::any_requires_grad<T>({&x, &gamma, &beta})) {
    detail::record(out, [x, gamma, beta, xhat, inv_std, rows, d](const std::vector<T>& g) {
      auto* gx = detail::grad_sink(x);
      auto* gg = detail::grad_sink(gamma);
      auto* gbt = detail::grad_sink(beta);
      for (std::size_t r = 0; r < rows; ++r) {
        T mean_gh{0}, mean_ghx{0};
        for (std::size_t j = 0; j < d; ++j) {
          const T gh = g[r * d + j] * gamma[j];
          mean_gh += gh;
          mean_ghx += gh * xhat[r * d + j];
          if (gg) (*gg)[j] += g[r * d + j] * xhat[r * d + j];
          if (gbt) (*gbt)[j] += g[r * d + j];
        }
        mean_gh /= static_cast<T>(d);
        mean_ghx /= static_cast<T>(d);
        if (gx)
          for (std::size_t j = 0; j < d; ++j)
            (*gx)[r * d + j] += inv_std[r] * (g[r * d + j] * gamma[j] - mean_gh - xhat[r * d + j] * mean_ghx);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------- spatial

struct Extent3 {
  std::size_t t = 1, h = 1, w = 1;
  friend bool operator==(const Extent3&, const Extent3&) = default;
  std::size_t volume() const { return t * h * w; }
};

inline std::string to_string(const Extent3& e) {
  return "(" + std::to_string(e.t) + "," + std::to_string(e.h) + "," + std::to_string(e.w) + ")";
}

namespace detail {
inline void require_grid(const Shape& s, const char* op) {
  if (s.size() != 4) throw DimensionError(std::string(op) + " expects a [C,T,H,W] grid, got " + to_string(s));
}
}  // namespace detail

// 3-D cross-correlation over x[Ci,T,H,W] with weight[Co, Ci/groups, kt, kh, kw]
// and optional bias[Co]. Zero padding `pad` on both sides of each axis.
template <class T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Extent3 stride, Extent3 pad,
                 std::size_t groups = 1) {
  detail::require_grid(x.shape(), "conv3d");
  if (weight.rank() != 5) throw DimensionError("conv3d weight must be [Co,Ci/g,kt,kh,kw], got " + to_string(weight.shape()));
  const std::size_t ci = x.shape()[0], ti = x.shape()[1], hi = x.shape()[2], wi = x.shape()[3];
  const std::size_t co = weight.shape()[0], cig = weight.shape()[1];
  const std::size_t kt = weight.shape()[2], kh = weight.shape()[3], kw = weight.shape()[4];
  if (groups == 0 || ci % groups != 0 || co % groups != 0 || cig != ci / groups)
    throw DimensionError("conv3d channel mismatch: input " + to_string(x.shape()) + ", weight " +
                         to_string(weight.shape()) + ", groups " + std::to_string(groups));
  if (bias.defined() && bias.numel() != co) throw DimensionError("conv3d bias must have " + std::to_string(co) + " entries");
  if (ti + 2 * pad.t < kt || hi + 2 * pad.h < kh || wi + 2 * pad.w < kw)
    throw DimensionError("conv3d kernel larger than padded input " + to_string(x.shape()));
  const std::size_t to = (ti + 2 * pad.t - kt) / stride.t + 1;
  const std::size_t ho = (hi + 2 * pad.h - kh) / stride.h + 1;
  const std::size_t wo = (wi + 2 * pad.w - kw) / stride.w + 1;
  const std::size_t cog = co / groups;
  Tensor<T> out(Shape{co, to, ho, wo});
  auto& o = out.values();
  const auto& xv = x.values();
  const auto& wv = weight.values();
  const std::size_t in_plane = ti * hi * wi, out_plane = to * ho * wo, kvol = kt * kh * kw;

  // Visits every (output voxel, kernel tap) pair that lands inside the input.
  auto visit = [=](auto&& fn) {
    for (std::size_t oc = 0; oc < co; ++oc) {
      const std::size_t g = oc / cog;
      for (std::size_t icg = 0; icg < cig; ++icg) {
        const std::size_t ic = g * cig + icg;
        const std::size_t wbase = (oc * cig + icg) * kvol;
        for (std::size_t a = 0; a < kt; ++a)
          for (std::size_t b = 0; b < kh; ++b)
            for (std::size_t c = 0; c < kw; ++c) {
              const std::size_t widx = wbase + (a * kh + b) * kw + c;
              for (std::size_t ot = 0; ot < to; ++ot) {
                const long it = static_cast<long>(ot * stride.t + a) - static_cast<long>(pad.t);
                if (it < 0 || it >= static_cast<long>(ti)) continue;
                for (std::size_t oh = 0; oh < ho; ++oh) {
                  const long ih = static_cast<long>(oh * stride.h + b) - static_cast<long>(pad.h);
                  if (ih < 0 || ih >= static_cast<long>(hi)) continue;
                  const std::size_t obase = oc * out_plane + (ot * ho + oh) * wo;
                  const std::size_t ibase = ic * in_plane + (static_cast<std::size_t>(it) * hi + static_cast<std::size_t>(ih)) * wi;
                  // ow range with iw = ow*sw + c - pw inside [0, wi)
                  std::size_t ow_lo = 0;
                  if (c < pad.w) ow_lo = (pad.w - c + stride.w - 1) / stride.w;
                  for (std::size_t ow = ow_lo; ow < wo; ++ow) {
                    const std::size_t iw = ow * stride.w + c - pad.w;
                    if (iw >= wi) break;
                    fn(obase + ow, ibase + iw, widx);
                  }
                }
              }
            }
      }
    }
  };

  visit([&](std::size_t oi, std::size_t ii, std::size_t wi_) { o[oi] += xv[ii] * wv[wi_]; });
  if (bias.defined())
    for (std::size_t oc = 0; oc < co; ++oc)
      for (std::size_t j = 0; j < out_plane; ++j) o[oc * out_plane + j] += bias[oc];
  count_macs(static_cast<std::uint64_t>(out_plane) * co * cig * kvol);

  if (detail::any_requires_grad<T>({&x, &weight, &bias})) {
    detail::record(out, [x, weight, bias, visit, co, out_plane](const std::vector<T>& g) {
      auto* gx = detail::grad_sink(x);
      auto* gw = detail::grad_sink(weight);
      auto* gb = detail::grad_sink(bias);
      const auto& xv = x.values();
      const auto& wv = weight.values();
      if (gx && gw)
        visit([&](std::size_t oi, std::size_t ii, std::size_t wi_) {
          (*gx)[ii] += g[oi] * wv[wi_];
          (*gw)[wi_] += g[oi] * xv[ii];
        });
      else if (gx)
        visit([&](std::size_t oi, std::size_t ii, std::size_t wi_) { (*gx)[ii] += g[oi] * wv[wi_]; });
      else if (gw)
        visit([&](std::size_t oi, std::size_t ii, std::size_t wi_) { (*gw)[wi_] += g[oi] * xv[ii]; });
      if (gb)
        for (std::size_t oc = 0; oc < co; ++oc)
          for (std::size_t j = 0; j < out_plane; ++j) (*gb)[oc] += g[oc * out_plane + j];
    });
  }
  return out;
}

namespace detail {
// Adaptive pooling bins: [floor(i*in/out), ceil((i+1)*in/out)).
inline std::vector<std::pair<std::size_t, std::size_t>> adaptive_bins(std::size_t in, std::size_t out) {
  std::vector<std::pair<std::size_t, std::size_t>> bins(out);
  for (std::size_t i = 0; i < out; ++i) bins[i] = {(i * in) / out, ((i + 1) * in + out - 1) / out};
  return bins;
}
}  // namespace detail

// Adaptive average pooling of x[C,T,H,W] to `target`. Bin i along an axis of
// extent `in` covers [floor(i*in/out), ceil((i+1)*in/out)).
template <class T>
Tensor<T> adaptive_avg_pool3d(const Tensor<T>& x, Extent3 target) {
  detail::require_grid(x.shape(), "adaptive_avg_pool3d");
  if (target.t == 0 || target.h == 0 || target.w == 0)
    throw ConfigError("adaptive pooling target extents must be >= 1, got " + to_string(target));
  const std::size_t c = x.shape()[0], ti = x.shape()[1], hi = x.shape()[2], wi = x.shape()[3];
  if (target.t > ti || target.h > hi || target.w > wi)
    throw ConfigError("adaptive pooling target " + to_string(target) + " exceeds input " + to_string(x.shape()));
  const auto bt = detail::adaptive_bins(ti, target.t);
  const auto bh = detail::adaptive_bins(hi, target.h);
  const auto bw = detail::adaptive_bins(wi, target.w);
  Tensor<T> out(Shape{c, target.t, target.h, target.w});
  auto visit = [=](auto&& fn) {
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t a = 0; a < target.t; ++a)
        for (std::size_t b = 0; b < target.h; ++b)
          for (std::size_t d = 0; d < target.w; ++d) {
            const std::size_t oi = ((ch * target.t + a) * target.h + b) * target.w + d;
            const std::size_t count = (bt[a].second - bt[a].first) * (bh[b].second - bh[b].first) *
                                      (bw[d].second - bw[d].first);
            for (std::size_t t = bt[a].first; t < bt[a].second; ++t)
              for (std::size_t h = bh[b].first; h < bh[b].second; ++h)
                for (std::size_t w = bw[d].first; w < bw[d].second; ++w)
                  fn(oi, ((ch * ti + t) * hi + h) * wi + w, count);
          }
  };
  auto& o = out.values();
  const auto& xv = x.values();
  // Sum then divide so a constant field pools to exactly that constant.
  std::vector<std::size_t> counts(o.size(), 1);
  visit([&](std::size_t oi, std::size_t ii, std::size_t count) {
    o[oi] += xv[ii];
    counts[oi] = count;
  });
  for (std::size_t i = 0; i < o.size(); ++i) o[i] /= static_cast<T>(counts[i]);
  if (detail::any_requires_grad<T>({&x})) {
    detail::record(out, [x, visit](const std::vector<T>& g) {
      auto& gx = *detail::grad_sink(x);
      visit([&](std::size_t oi, std::size_t ii, std::size_t count) { gx[ii] += g[oi] / static_cast<T>(count); });
    });
  }
  return out;
}

// Mean over all positions of each channel: [C,...] -> [C].
template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const std::size_t c = x.shape()[0];
  return mean_axis(reshape(x, Shape{c, x.numel() / c}), 1);
}

namespace detail {
struct LerpTap {
  std::size_t i0, i1;
  double w1;
};

inline std::vector<LerpTap> lerp_taps(std::size_t in, std::size_t out) {
  std::vector<LerpTap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[i] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}
}  // namespace detail

// Trilinear resampling of x[C,T,H,W] to `target` (align_corners=false, see
// the header comment for the sample-position formula).
template <class T>
Tensor<T> trilinear_resample(const Tensor<T>& x, Extent3 target) {
  detail::require_grid(x.shape(), "trilinear_resample");
  if (target.t == 0 || target.h == 0 || target.w == 0)
    throw ConfigError("resample target extents must be >= 1, got " + to_string(target));
  const std::size_t c = x.shape()[0], ti = x.shape()[1], hi = x.shape()[2], wi = x.shape()[3];
  if (ti == target.t && hi == target.h && wi == target.w) return x;
  const auto lt = detail::lerp_taps(ti, target.t);
  const auto lh = detail::lerp_taps(hi, target.h);
  const auto lw = detail::lerp_taps(wi, target.w);
  Tensor<T> out(Shape{c, target.t, target.h, target.w});
  auto visit = [=](auto&& fn) {
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t a = 0; a < target.t; ++a)
        for (std::size_t b = 0; b < target.h; ++b)
          for (std::size_t d = 0; d < target.w; ++d) {
            const std::size_t oi = ((ch * target.t + a) * target.h + b) * target.w + d;
            const std::size_t ts[2] = {lt[a].i0, lt[a].i1};
            const std::size_t hs[2] = {lh[b].i0, lh[b].i1};
            const std::size_t ws[2] = {lw[d].i0, lw[d].i1};
            const double wt[2] = {1 - lt[a].w1, lt[a].w1};
            const double wh[2] = {1 - lh[b].w1, lh[b].w1};
            const double ww[2] = {1 - lw[d].w1, lw[d].w1};
            for (int p = 0; p < 2; ++p)
              for (int q = 0; q < 2; ++q)
                for (int r = 0; r < 2; ++r) {
                  const double wgt = wt[p] * wh[q] * ww[r];
                  if (wgt == 0.0) continue;
                  fn(oi, ((ch * ti + ts[p]) * hi + hs[q]) * wi + ws[r], static_cast<T>(wgt));
                }
          }
  };
  auto& o = out.values();
  const auto& xv = x.values();
  visit([&](std::size_t oi, std::size_t ii, T wgt) { o[oi] += wgt * xv[ii]; });
  if (detail::any_requires_grad<T>({&x})) {
    detail::record(out, [x, visit](const std::vector<T>& g) {
      auto& gx = *detail::grad_sink(x);
      visit([&](std::size_t oi, std::size_t ii, T wgt) { gx[ii] += wgt * g[oi]; });
    });
  }
  return out;
}

// Patch merging: gathers each 2x2 spatial neighbourhood into channels,
// [C,T,H,W] -> [4C, T, ceil(H/2), ceil(W/2)], zero-padding odd extents.
// Channel block q holds neighbour (h parity, w parity) = (0,0),(1,0),(0,1),(1,1).
template <class T>
Tensor<T> merge_patches_2x2(const Tensor<T>& x) {
  detail::require_grid(x.shape(), "merge_patches_2x2");
  const std::size_t c = x.shape()[0], t = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const std::size_t ho = (h + 1) / 2, wo = (w + 1) / 2;
  Tensor<T> out(Shape{4 * c, t, ho, wo});
  static constexpr std::size_t dh[4] = {0, 1, 0, 1};
  static constexpr std::size_t dw[4] = {0, 0, 1, 1};
  auto visit = [=](auto&& fn) {
    for (std::size_t q = 0; q < 4; ++q)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t a = 0; a < t; ++a)
          for (std::size_t b = 0; b < ho; ++b)
            for (std::size_t d = 0; d < wo; ++d) {
              const std::size_t ih = 2 * b + dh[q], iw = 2 * d + dw[q];
              if (ih >= h || iw >= w) continue;
              fn((((q * c + ch) * t + a) * ho + b) * wo + d, ((ch * t + a) * h + ih) * w + iw);
            }
  };
  auto& o = out.values();
  const auto& xv = x.values();
  visit([&](std::size_t oi, std::size_t ii) { o[oi] = xv[ii]; });
  if (detail::any_requires_grad<T>({&x})) {
    detail::record(out, [x, visit](const std::vector<T>& g) {
      auto& gx = *detail::grad_sink(x);
      visit([&](std::size_t oi, std::size_t ii) { gx[ii] += g[oi]; });
    });
  }
  return out;
}

// Token <-> grid conversion. Tokens are ordered row-major over the spatial
// axes (T, H, W): grid [C, S...] <-> tokens [prod(S), C].
template <class T>
Tensor<T> grid_to_tokens(const Tensor<T>& grid) {
  const std::size_t c = grid.shape()[0];
  std::vector<std::size_t> perm;
  for (std::size_t i = 1; i < grid.rank(); ++i) perm.push_back(i);
  perm.push_back(0);
  return reshape(permute(grid, perm), Shape{grid.numel() / c, c});
}

template <class T>
Tensor<T> tokens_to_grid(const Tensor<T>& tokens, const Shape& spatial) {
  if (tokens.rank() != 2 || numel(spatial) != tokens.shape()[0])
    throw DimensionError("tokens " + to_string(tokens.shape()) + " do not fold into spatial layout " + to_string(spatial));
  Shape s = spatial;
  s.push_back(tokens.shape()[1]);
  std::vector<std::size_t> perm{spatial.size()};
  for (std::size_t i = 0; i < spatial.size(); ++i) perm.push_back(i);
  return permute(reshape(tokens, s), perm);
}

}  // namespace npsnet
