#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "npsnet/core/params.hpp"

namespace npsnet {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment estimates plus the step counter.
struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::uint64_t step = 0;

  static AdamState for_sizes(std::span<const std::size_t> sizes) {
    AdamState s;
    for (auto n : sizes) {
      s.m.emplace_back(n, 0.0);
      s.v.emplace_back(n, 0.0);
    }
    return s;
  }
};

// One bias-corrected Adam update in place. `grads[i]` must match
// `params[i]`; an empty gradient vector counts as zero.
template <class T>
void adam_step(std::span<std::vector<T>* const> params, std::span<const std::vector<T>* const> grads, AdamState& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " params, " + std::to_string(grads.size()) +
                         " grads, state for " + std::to_string(state.m.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t n = params[i]->size();
    if (state.m[i].size() != n || (!grads[i]->empty() && grads[i]->size() != n))
      throw DimensionError("adam_step: size mismatch at parameter " + std::to_string(i));
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    const auto& g = *grads[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g.empty() ? 0.0 : static_cast<double>(g[j]);
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] = static_cast<T>(static_cast<double>(p[j]) - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

// Adam bound to a ParamStore.
template <class T>
class Adam {
 public:
  Adam(ParamStore<T>& store, AdamConfig cfg) : store_(store), cfg_(cfg) {
    std::vector<std::size_t> sizes;
    for (auto& p : store_.params()) sizes.push_back(p.tensor.numel());
    state_ = AdamState::for_sizes(sizes);
  }

  void step() {
    std::vector<std::vector<T>*> ps;
    std::vector<const std::vector<T>*> gs;
    static const std::vector<T> none;
    for (auto& p : store_.params()) {
      ps.push_back(&p.tensor.values());
      gs.push_back(p.tensor.has_grad() ? &p.tensor.node()->grad : &none);
    }
    adam_step<T>(ps, gs, state_, cfg_);
  }

  const AdamState& state() const { return state_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  ParamStore<T>& store_;
  AdamConfig cfg_;
  AdamState state_;
};

}  // namespace npsnet
