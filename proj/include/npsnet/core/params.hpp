#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "npsnet/core/random.hpp"
#include "npsnet/core/tensor.hpp"

namespace npsnet {

template <class T>
struct Param {
  std::string name;
  Tensor<T> tensor;
};

enum class Init { Uniform, Zeros, Ones };

// Owns every trainable tensor of a model, in registration order.
//
// Weights are drawn from uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) using a
// stream derived from (seed, param name), so two models built from the same
// seed share values for every parameter they have in common even when one of
// them registers extra parameters (ablation variants stay comparable).
//
// A store built with allocate=false records names and shapes only; used to
// count parameters of configurations too large to instantiate.
template <class T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed, bool allocate = true) : seed_(seed), allocate_(allocate) {}

  Tensor<T> add(const std::string& name, Shape shape, Init init, std::size_t fan_in = 1) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_.emplace(name, specs_.size());
    specs_.emplace_back(name, shape);
    if (!allocate_) {
      params_.push_back({name, Tensor<T>()});
      return Tensor<T>();
    }
    Tensor<T> t(shape);
    switch (init) {
      case Init::Zeros:
        break;
      case Init::Ones:
        for (auto& v : t.values()) v = T{1};
        break;
      case Init::Uniform: {
        Rng rng = named_rng(seed_, name);
        const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
        for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
        break;
      }
    }
    t.set_requires_grad(true);
    params_.push_back({name, t});
    return t;
  }

  bool allocated() const { return allocate_; }
  std::uint64_t seed() const { return seed_; }
  std::vector<Param<T>>& params() { return params_; }
  const std::vector<Param<T>>& params() const { return params_; }
  const std::vector<std::pair<std::string, Shape>>& specs() const { return specs_; }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw UsageError("no parameter named " + name);
    return params_[it->second].tensor;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [name, shape] : specs_) n += numel(shape);
    return n;
  }

  void zero_grad() {
    for (auto& p : params_)
      if (p.tensor.defined()) p.tensor.zero_grad();
  }

 private:
  std::uint64_t seed_;
  bool allocate_;
  std::vector<Param<T>> params_;
  std::vector<std::pair<std::string, Shape>> specs_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace npsnet
