#pragma once

// Seeded finite-difference checks for every differentiable primitive op and
// every composed module of the network. Each case draws random extents and inputs from its seed, builds
// the module in f64, and checks the gradient of the inputs and of every
// parameter the module owns.

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "npsnet/model/fusion.hpp"
#include "npsnet/model/head.hpp"
#include "npsnet/model/ufm.hpp"
#include "support/gradcheck.hpp"

namespace npsnet::testing {

struct GradCase {
  std::string module;
  std::uint64_t seed = 0;
  std::string shape;
  GradCheckResult result;
};

inline constexpr double kGradTolerance = 1e-5;
inline constexpr std::size_t kCasesPerModule = 20;

namespace detail {

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

// Perturbing a parameter through `inputs` changes the module, since tensors
// share storage. Constant-initialized parameters (biases, norm gains) are
// jittered first: a zero bias behind a dead channel puts a ReLU exactly on
// its kink, where the finite difference is meaningless.
inline std::vector<Tensor<double>> with_params(std::vector<Tensor<double>> inputs, ParamStore<double>& store) {
  Rng rng(mix_seed(store.seed(), 7));
  for (auto& p : store.params()) {
    auto& v = p.tensor.values();
    if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); }))
      for (auto& x : v) x += rng.uniform(-0.3, 0.3);
    inputs.push_back(p.tensor);
  }
  return inputs;
}

inline GradCase ufm_case(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 101));
  UfmConfig cfg;
  cfg.spatial_rank = pick(rng, 1, 3);
  cfg.heads = pick(rng, 1, 2);
  cfg.d_model = cfg.heads * pick(rng, 1, 3);
  Shape layout;
  cfg.kernel.clear();
  for (std::size_t i = 0; i < cfg.spatial_rank; ++i) {
    layout.push_back(pick(rng, 1, cfg.spatial_rank == 1 ? 6 : 3));
    cfg.kernel.push_back(rng.below(2) ? 3 : 1);
  }
  do {
    cfg.branches = {rng.below(2) == 1, rng.below(2) == 1, rng.below(2) == 1};
  } while (!cfg.branches.any());
  ParamStore<double> store(seed);
  auto ufm = Ufm<double>::create(store, "ufm", cfg);
  Tensor<double> x = random_tensor(rng, {numel(layout), cfg.d_model});
  auto f = [&](const std::vector<Tensor<double>>& in) { return ufm(TokenMap<double>{in[0], layout}).tokens; };
  return {"ufm", seed, "tokens " + to_string(x.shape()) + " layout " + to_string(layout),
          grad_check(f, with_params({x}, store), seed)};
}

inline GradCase bilinear_case(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 202));
  const std::size_t k = pick(rng, 1, 5), d_a = pick(rng, 1, 5), d_o = pick(rng, 1, 5), d_v = pick(rng, 1, 5);
  ParamStore<double> store(seed);
  auto p = BilinearParams<double>::create(store, "bilinear", d_a, d_o, d_v);
  for (auto& v : p.bias.values()) v = rng.uniform(-1, 1);
  Tensor<double> h_a = random_tensor(rng, {k, d_a}), h_v = random_tensor(rng, {k, d_v});
  auto f = [&](const std::vector<Tensor<double>>& in) { return bilinear_affinity(in[0], in[1], p); };
  return {"bilinear", seed, "k=" + std::to_string(k) + " d_a=" + std::to_string(d_a) + " d_o=" + std::to_string(d_o) +
                               " d_v=" + std::to_string(d_v),
          grad_check(f, with_params({h_a, h_v}, store), seed)};
}

inline GradCase mca_case(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 303));
  const std::size_t heads = pick(rng, 1, 3), dim = heads * pick(rng, 1, 3);
  const std::size_t tq = pick(rng, 1, 5), tk = pick(rng, 1, 5), d_q = pick(rng, 1, 5), d_kv = pick(rng, 1, 5),
                    d_out = pick(rng, 1, 5);
  ParamStore<double> store(seed);
  auto mca = nn::MultiHeadAttention<double>::create(store, "mca", d_q, d_kv, dim, d_out, heads);
  Tensor<double> q = random_tensor(rng, {tq, d_q}), kv = random_tensor(rng, {tk, d_kv});
  auto f = [&](const std::vector<Tensor<double>>& in) { return mca(in[0], in[1]); };
  return {"mca", seed, "q " + to_string(q.shape()) + " kv " + to_string(kv.shape()) + " heads " + std::to_string(heads),
          grad_check(f, with_params({q, kv}, store), seed)};
}

inline GradCase fusion_case(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 404));
  FusionConfig cfg;
  cfg.heads = pick(rng, 1, 2);
  cfg.d_o = cfg.heads * pick(rng, 1, 3);
  cfg.blocks = pick(rng, 1, 2);
  cfg.mlp_ratio = 2;
  cfg.lattice_h = pick(rng, 1, 3);
  cfg.lattice_w = pick(rng, 1, 3);
  cfg.channels = pick(rng, 1, 3);
  cfg.conv_kernel = rng.below(2) ? 3 : 1;
  const std::size_t k = pick(rng, 1, 5);
  cfg.target = {pick(rng, 1, k), pick(rng, 1, cfg.lattice_h), pick(rng, 1, cfg.lattice_w)};
  ParamStore<double> store(seed);
  auto enc = FusionEncoder<double>::create(store, cfg);
  Tensor<double> a = random_tensor(rng, {k, cfg.d_o});
  auto f = [&](const std::vector<Tensor<double>>& in) { return enc(in[0]); };
  return {"fusion_encoder", seed, "a " + to_string(a.shape()) + " target " + to_string(cfg.target),
          grad_check(f, with_params({a}, store), seed, 1e-5, 24)};
}

inline GradCase decoder_case(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 505));
  ModelConfig cfg;
  cfg.frame_height = pick(rng, 3, 8);
  cfg.frame_width = pick(rng, 3, 8);
  cfg.fusion.channels = pick(rng, 1, 3);
  const std::array<std::size_t, 6> divs{8, 4, 4, 2, 1, 1};
  for (std::size_t i = 0; i < 6; ++i)
    cfg.decoder.layers[i] = {i == 5 ? 1 : pick(rng, 1, 3), rng.below(2) ? 3u : 1u, divs[i]};
  cfg.decoder.layers[5].kernel = 3;
  cfg.decoder.deep_after = pick(rng, 1, 3);
  cfg.decoder.shallow_after = pick(rng, 3, 5);
  const std::size_t shallow_c = pick(rng, 1, 3), deep_c = pick(rng, 1, 3), t = pick(rng, 1, 2);
  ParamStore<double> store(seed);
  auto dec = Decoder<double>::create(store, cfg, shallow_c, deep_c);
  Tensor<double> feat = random_tensor(rng, {cfg.fusion.channels, t, 2, 2});
  Tensor<double> shallow = random_tensor(rng, {shallow_c, t, pick(rng, 1, 4), pick(rng, 1, 4)});
  Tensor<double> deep = random_tensor(rng, {deep_c, 1, pick(rng, 1, 2), pick(rng, 1, 2)});
  auto f = [&](const std::vector<Tensor<double>>& in) { return dec(in[0], EncoderTaps<double>{in[1], in[2]}); };
  return {"decoder", seed,
          "map " + std::to_string(cfg.frame_height) + "x" + std::to_string(cfg.frame_width) + " features " +
              to_string(feat.shape()),
          grad_check(f, with_params({feat, shallow, deep}, store), seed, 1e-5, 16)};
}

inline GradCase kld_case(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 606));
  const std::size_t h = pick(rng, 1, 6), w = pick(rng, 2, 6);
  const double eps_choices[] = {1e-8, 1e-4, 1e-2, 0.1};
  const double eps = eps_choices[rng.below(4)];
  Tensor<double> pred = random_tensor(rng, {h, w}, 0.05, 1.0);
  std::vector<double> q(h * w);
  for (auto& v : q) v = rng.below(3) == 0 ? 0.0 : rng.uniform(0.0, 1.0);
  q[rng.below(q.size())] = 1.0;
  Tensor<double> target({h, w}, q);
  auto f = [&](const std::vector<Tensor<double>>& in) { return kld_loss(in[0], target, eps); };
  return {"kld", seed, to_string(pred.shape()) + " eps " + std::to_string(eps), grad_check(f, {pred}, seed, 1e-6)};
}


// ---------------------------------------------------------------- primitive ops

struct OpCase {
  std::string shape;
  std::vector<Tensor<double>> inputs;
  GraphFn fn;
};

inline Shape random_shape(Rng& rng, std::size_t min_rank, std::size_t max_rank, std::size_t max_extent = 4) {
  Shape s(pick(rng, min_rank, max_rank));
  for (auto& e : s) e = pick(rng, 1, max_extent);
  return s;
}

// Replaces a random subset of extents with 1 so the result broadcasts to `s`.
inline Shape broadcastable(Rng& rng, Shape s) {
  for (auto& e : s)
    if (rng.below(3) == 0) e = 1;
  const std::size_t drop = rng.below(s.size() + 1);
  return Shape(s.begin() + static_cast<long>(drop), s.end());
}

inline OpCase binary_op_case(Rng& rng, GraphFn fn) {
  const Shape out = random_shape(rng, 1, 4);
  const bool swap = rng.below(2) == 1;
  Tensor<double> a = random_tensor(rng, out), b = random_tensor(rng, broadcastable(rng, out));
  if (swap) std::swap(a, b);
  return {to_string(a.shape()) + " with " + to_string(b.shape()), {a, b}, std::move(fn)};
}

inline OpCase unary_op_case(Rng& rng, GraphFn fn, double lo = -2.0, double hi = 2.0) {
  Tensor<double> x = random_tensor(rng, random_shape(rng, 1, 4), lo, hi);
  return {to_string(x.shape()), {x}, std::move(fn)};
}

inline std::vector<std::pair<std::string, std::function<OpCase(Rng&)>>> op_builders() {
  using In = const std::vector<Tensor<double>>&;
  return {
      {"add", [](Rng& r) { return binary_op_case(r, [](In in) { return add(in[0], in[1]); }); }},
      {"sub", [](Rng& r) { return binary_op_case(r, [](In in) { return sub(in[0], in[1]); }); }},
      {"mul", [](Rng& r) { return binary_op_case(r, [](In in) { return mul(in[0], in[1]); }); }},
      {"scale", [](Rng& r) {
         const double s = r.uniform(-3, 3);
         return unary_op_case(r, [s](In in) { return scale(in[0], s); });
       }},
      {"add_scalar", [](Rng& r) { return unary_op_case(r, [](In in) { return add_scalar(in[0], 0.7); }); }},
      {"relu", [](Rng& r) {
         // Keep inputs off the kink.
         OpCase c = unary_op_case(r, [](In in) { return relu(in[0]); });
         for (auto& v : c.inputs[0].values()) v = v < 0 ? v - 0.01 : v + 0.01;
         return c;
       }},
      {"gelu", [](Rng& r) { return unary_op_case(r, [](In in) { return gelu(in[0]); }, -4, 4); }},
      {"sigmoid", [](Rng& r) { return unary_op_case(r, [](In in) { return sigmoid(in[0]); }, -6, 6); }},
      {"reshape", [](Rng& r) {
         OpCase c = unary_op_case(r, [](In in) { return reshape(in[0], Shape{in[0].numel()}); });
         return c;
       }},
      {"permute", [](Rng& r) {
         Tensor<double> x = random_tensor(r, random_shape(r, 1, 4));
         std::vector<std::size_t> perm(x.rank());
         for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
         r.shuffle(perm.begin(), perm.end());
         return OpCase{to_string(x.shape()) + " perm " + to_string(Shape(perm.begin(), perm.end())), {x},
                       [perm](In in) { return permute(in[0], perm); }};
       }},
      {"transpose", [](Rng& r) {
         Tensor<double> x = random_tensor(r, random_shape(r, 2, 4));
         return OpCase{to_string(x.shape()), {x}, [](In in) { return transpose(in[0]); }};
       }},
      {"expand", [](Rng& r) {
         const Shape out = random_shape(r, 1, 4);
         Tensor<double> x = random_tensor(r, broadcastable(r, out));
         return OpCase{to_string(x.shape()) + " to " + to_string(out), {x}, [out](In in) { return expand(in[0], out); }};
       }},
      {"concat", [](Rng& r) {
         const Shape base = random_shape(r, 1, 3);
         const std::size_t axis = r.below(base.size()), n = pick(r, 1, 3);
         std::vector<Tensor<double>> xs;
         std::string desc;
         for (std::size_t i = 0; i < n; ++i) {
           Shape s = base;
           s[axis] = pick(r, 1, 3);
           xs.push_back(random_tensor(r, s));
           desc += to_string(s) + " ";
         }
         return OpCase{desc + "axis " + std::to_string(axis), xs,
                       [axis](In in) { return concat(in, static_cast<long>(axis)); }};
       }},
      {"slice", [](Rng& r) {
         Tensor<double> x = random_tensor(r, random_shape(r, 1, 3));
         const std::size_t axis = r.below(x.rank()), n = x.shape()[axis];
         const std::size_t b = r.below(n), e = pick(r, b + 1, n);
         return OpCase{to_string(x.shape()) + " axis " + std::to_string(axis), {x},
                       [axis, b, e](In in) { return slice(in[0], static_cast<long>(axis), b, e); }};
       }},
      {"index_select", [](Rng& r) {
         Tensor<double> x = random_tensor(r, random_shape(r, 1, 3));
         std::vector<std::size_t> rows(pick(r, 1, 5));
         for (auto& i : rows) i = r.below(x.shape()[0]);  // repeats allowed
         return OpCase{to_string(x.shape()), {x}, [rows](In in) { return index_select(in[0], rows); }};
       }},
      {"sum", [](Rng& r) { return unary_op_case(r, [](In in) { return sum(in[0]); }); }},
      {"mean", [](Rng& r) { return unary_op_case(r, [](In in) { return mean(in[0]); }); }},
      {"sum_axis", [](Rng& r) {
         Tensor<double> x = random_tensor(r, random_shape(r, 1, 4));
         const long axis = static_cast<long>(r.below(x.rank()));
         const bool keep = r.below(2) == 1;
         return OpCase{to_string(x.shape()) + " axis " + std::to_string(axis), {x},
                       [axis, keep](In in) { return sum_axis(in[0], axis, keep); }};
       }},
      {"mean_axis", [](Rng& r) {
         Tensor<double> x = random_tensor(r, random_shape(r, 1, 4));
         const long axis = static_cast<long>(r.below(x.rank()));
         return OpCase{to_string(x.shape()) + " axis " + std::to_string(axis), {x},
                       [axis](In in) { return mean_axis(in[0], axis); }};
       }},
      {"softmax", [](Rng& r) {
         Tensor<double> x = random_tensor(r, random_shape(r, 1, 3), -3, 3);
         const long axis = static_cast<long>(r.below(x.rank()));
         return OpCase{to_string(x.shape()) + " axis " + std::to_string(axis), {x},
                       [axis](In in) { return softmax(in[0], axis); }};
       }},
      {"matmul", [](Rng& r) {
         const std::size_t m = pick(r, 1, 4), k = pick(r, 1, 4), n = pick(r, 1, 4);
         Shape sa{m, k}, sb{k, n};
         if (r.below(2)) sa.insert(sa.begin(), pick(r, 1, 3));
         if (r.below(2)) sb.insert(sb.begin(), sa.size() == 3 && r.below(2) ? sa[0] : 1);
         Tensor<double> a = random_tensor(r, sa), b = random_tensor(r, sb);
         return OpCase{to_string(sa) + " x " + to_string(sb), {a, b}, [](In in) { return matmul(in[0], in[1]); }};
       }},
      {"layer_norm", [](Rng& r) {
         Shape s = random_shape(r, 1, 3);
         s.back() = pick(r, 2, 6);
         Tensor<double> x = random_tensor(r, s, -2, 2), g = random_tensor(r, {s.back()}), b = random_tensor(r, {s.back()});
         return OpCase{to_string(s), {x, g, b}, [](In in) { return layer_norm(in[0], in[1], in[2]); }};
       }},
      {"conv3d", [](Rng& r) {
         const std::size_t groups = pick(r, 1, 2), ci = groups * pick(r, 1, 2), co = groups * pick(r, 1, 2);
         const Extent3 k{pick(r, 1, 3), pick(r, 1, 3), pick(r, 1, 3)};
         const Extent3 stride{pick(r, 1, 2), pick(r, 1, 2), pick(r, 1, 2)};
         const Extent3 pad{r.below(k.t), r.below(k.h), r.below(k.w)};
         const Shape xs{ci, pick(r, k.t, 4), pick(r, k.h, 4), pick(r, k.w, 4)};
         Tensor<double> x = random_tensor(r, xs), w = random_tensor(r, {co, ci / groups, k.t, k.h, k.w});
         const bool with_bias = r.below(2) == 1;
         std::vector<Tensor<double>> in{x, w};
         if (with_bias) in.push_back(random_tensor(r, {co}));
         return OpCase{to_string(xs) + " kernel " + to_string(k) + " stride " + to_string(stride) + " pad " + to_string(pad) +
                           " groups " + std::to_string(groups),
                       in, [=](In v) { return conv3d(v[0], v[1], with_bias ? v[2] : Tensor<double>(), stride, pad, groups); }};
       }},
      {"adaptive_avg_pool3d", [](Rng& r) {
         const Shape xs{pick(r, 1, 2), pick(r, 1, 5), pick(r, 1, 5), pick(r, 1, 5)};
         const Extent3 target{pick(r, 1, xs[1]), pick(r, 1, xs[2]), pick(r, 1, xs[3])};
         Tensor<double> x = random_tensor(r, xs);
         return OpCase{to_string(xs) + " to " + to_string(target), {x},
                       [target](In in) { return adaptive_avg_pool3d(in[0], target); }};
       }},
      {"global_avg_pool", [](Rng& r) {
         Tensor<double> x = random_tensor(r, {pick(r, 1, 3), pick(r, 1, 3), pick(r, 1, 3), pick(r, 1, 3)});
         return OpCase{to_string(x.shape()), {x}, [](In in) { return global_avg_pool(in[0]); }};
       }},
      {"trilinear_resample", [](Rng& r) {
         const Shape xs{pick(r, 1, 2), pick(r, 1, 4), pick(r, 1, 4), pick(r, 1, 4)};
         const Extent3 target{pick(r, 1, 6), pick(r, 1, 6), pick(r, 1, 6)};
         Tensor<double> x = random_tensor(r, xs);
         return OpCase{to_string(xs) + " to " + to_string(target), {x},
                       [target](In in) { return trilinear_resample(in[0], target); }};
       }},
      {"merge_patches_2x2", [](Rng& r) {
         Tensor<double> x = random_tensor(r, {pick(r, 1, 3), pick(r, 1, 2), pick(r, 1, 5), pick(r, 1, 5)});
         return OpCase{to_string(x.shape()), {x}, [](In in) { return merge_patches_2x2(in[0]); }};
       }},
      {"grid_tokens", [](Rng& r) {
         Tensor<double> x = random_tensor(r, {pick(r, 1, 3), pick(r, 1, 3), pick(r, 1, 3), pick(r, 1, 3)});
         const Shape layout(x.shape().begin() + 1, x.shape().end());
         Tensor<double> w = random_tensor(r, {x.shape()[0], x.shape()[0]});
         return OpCase{to_string(x.shape()), {x, w},
                       [layout](In in) { return tokens_to_grid(matmul(grid_to_tokens(in[0]), in[1]), layout); }};
       }},
  };
}

inline GradCase op_case(const std::string& op, std::uint64_t seed) {
  for (const auto& [name, build] : op_builders())
    if (name == op) {
      Rng rng(mix_seed(seed, fnv1a64(op)));
      OpCase c = build(rng);
      return {"op." + op, seed, c.shape, grad_check(c.fn, c.inputs, seed)};
    }
  throw UsageError("unknown op " + op);
}

}  // namespace detail

using CaseFn = std::function<GradCase(std::uint64_t)>;

inline const std::vector<std::pair<std::string, CaseFn>>& gradient_modules() {
  static const std::vector<std::pair<std::string, CaseFn>> modules = [] {
    std::vector<std::pair<std::string, CaseFn>> m;
    for (const auto& [op, build] : detail::op_builders()) {
      (void)build;
      m.emplace_back("op." + op, [op = op](std::uint64_t seed) { return detail::op_case(op, seed); });
    }
    m.emplace_back("ufm", detail::ufm_case);
    m.emplace_back("bilinear", detail::bilinear_case);
    m.emplace_back("mca", detail::mca_case);
    m.emplace_back("fusion_encoder", detail::fusion_case);
    m.emplace_back("decoder", detail::decoder_case);
    m.emplace_back("kld", detail::kld_case);
    return m;
  }();
  return modules;
}

inline std::vector<GradCase> run_gradient_module(const std::string& module, std::size_t cases = kCasesPerModule) {
  for (const auto& [name, fn] : gradient_modules())
    if (name == module) {
      std::vector<GradCase> out;
      for (std::uint64_t s = 0; s < cases; ++s) out.push_back(fn(s));
      return out;
    }
  throw UsageError("unknown gradient module " + module);
}

}  // namespace npsnet::testing
