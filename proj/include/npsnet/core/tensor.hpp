#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "npsnet/core/errors.hpp"

namespace npsnet {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// Row-major strides.
inline std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

inline void check_shape(const Shape& shape) {
  for (auto e : shape)
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
}

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until a gradient arrives
  bool requires_grad = false;
  bool leaf = true;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T{0});
  }
};

template <class T>
class Tape;

template <class T>
Tape<T>*& active_tape() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}

// Dense row-major tensor with shared storage. Copies alias the same node, so a
// Param handle held by a layer and the optimizer's view see the same data.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : node_(std::make_shared<Node<T>>()) {
    check_shape(shape);
    node_->value.assign(npsnet::numel(shape), fill);
    node_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> data) : node_(std::make_shared<Node<T>>()) {
    check_shape(shape);
    if (npsnet::numel(shape) != data.size())
      throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                           to_string(shape));
    node_->shape = std::move(shape);
    node_->value = std::move(data);
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T{0}); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T{1}); }
  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t extent(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  std::vector<T>& values() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }

  T& operator[](std::size_t i) { return node_->value[i]; }
  const T& operator[](std::size_t i) const { return node_->value[i]; }
  T item() const {
    if (numel() != 1) throw UsageError("item() on tensor of shape " + to_string(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on = true) {
    node_->requires_grad = on;
    return *this;
  }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  // Gradient as a tensor (zeros when none has arrived yet).
  Tensor grad() const {
    if (!has_grad()) return Tensor(shape(), T{0});
    return Tensor(shape(), node_->grad);
  }
  std::vector<T>& grad_values() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  // Value copy detached from any tape.
  Tensor detach() const { return Tensor(shape(), node_->value); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<Node<T>> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Ordered record of differentiable ops executed while the tape is active.
// backward() replays the record in reverse. Only ops with at least one
// gradient-requiring input are recorded.
template <class T>
class Tape {
 public:
  struct Entry {
    std::shared_ptr<Node<T>> output;
    std::function<void()> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const std::shared_ptr<Node<T>>& output, std::function<void()> backward) {
    output->leaf = false;
    entries_.push_back({output, std::move(backward)});
  }

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and propagates. Intermediate gradients are
  // reset first, so calling twice accumulates exactly twice into leaves.
  void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1)
      throw UsageError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
    if (!loss.requires_grad())
      throw UsageError("backward() on a loss that does not depend on any gradient-requiring tensor");
    for (auto& e : entries_) e.output->grad.clear();
    auto& root = *loss.node();
    root.ensure_grad();
    root.grad[0] = T{1};
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if (it->output->grad.empty()) continue;
      it->backward();
    }
  }

 private:
  std::vector<Entry> entries_;
};

// Makes `tape` the active tape of the calling thread for the scope's lifetime.
template <class T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : previous_(active_tape<T>()) { active_tape<T>() = &tape; }
  ~TapeScope() { active_tape<T>() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

template <class T>
void backward(const Tensor<T>& loss) {
  Tape<T>* tape = active_tape<T>();
  if (!tape) throw UsageError("backward() called without an active tape");
  tape->backward(loss);
}

namespace detail {

template <class T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> inputs) {
  if (!active_tape<T>()) return false;
  for (auto* t : inputs)
    if (t && t->defined() && t->requires_grad()) return true;
  return false;
}

// Registers `out` on the active tape with a backward closure. The closure
// receives the output gradient by reference.
template <class T, class Fn>
void record(Tensor<T>& out, Fn&& fn) {
  out.set_requires_grad(true);
  auto node = out.node();
  Node<T>* raw = node.get();
  active_tape<T>()->record(node, [raw, fn = std::forward<Fn>(fn)]() mutable { fn(raw->grad); });
}

template <class T>
std::vector<T>* grad_sink(const Tensor<T>& t) {
  if (!t.defined() || !t.requires_grad()) return nullptr;
  t.node()->ensure_grad();
  return &t.node()->grad;
}

}  // namespace detail

}  // namespace npsnet
