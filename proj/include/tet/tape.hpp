#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "tet/tensor.hpp"

namespace tet {

template <typename T>
class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<T>* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Reverse-mode computation tape. Nodes are appended in evaluation order, so
/// every input precedes its consumers; backward() walks them once in reverse.
///
/// Parameter nodes borrow their value from a ParameterStore and route their
/// gradient into an external sink, so large embedding tables are never copied
/// onto the tape.
template <typename T>
class Tape {
 public:
  /// Propagates the output gradient of `self` into its inputs.
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  Var<T> constant(Tensor<T> value) {
    Node n;
    n.owned = std::move(value);
    return push(std::move(n));
  }

  /// Grad-enabled leaf owning its value; its gradient is read back via grad().
  Var<T> leaf(Tensor<T> value) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = recording_;
    return push(std::move(n));
  }

  /// Leaf borrowing `value`. When `grad_sink` is non-null and the tape records,
  /// gradients accumulate into it; the sink must outlive backward().
  Var<T> parameter(const Tensor<T>& value, Tensor<T>* grad_sink) {
    Node n;
    n.borrowed = &value;
    n.grad_sink = recording_ ? grad_sink : nullptr;
    n.requires_grad = n.grad_sink != nullptr;
    return push(std::move(n));
  }

  /// Records an operation output. The backward closure is dropped when no input
  /// needs a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
    bool needs = false;
    if (recording_) {
      for (const auto& in : inputs) needs = needs || requires_grad(in.id());
    }
    Node n;
    n.owned = std::move(value);
    n.requires_grad = needs;
    if (needs) n.backward = std::move(fn);
    return push(std::move(n));
  }

  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn fn) {
    bool needs = false;
    if (recording_) {
      for (const auto& in : inputs) needs = needs || requires_grad(in.id());
    }
    Node n;
    n.owned = std::move(value);
    n.requires_grad = needs;
    if (needs) n.backward = std::move(fn);
    return push(std::move(n));
  }

  const Tensor<T>& value(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return n.borrowed ? *n.borrowed : n.owned;
  }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

  /// Gradient accumulator of a grad-enabled node, zero-initialised on first use.
  Tensor<T>& grad(std::uint32_t id) {
    Node& n = nodes_[id];
    if (n.grad_sink) return *n.grad_sink;
    if (n.grad.empty()) n.grad = Tensor<T>(value(id).shape());
    return n.grad;
  }
  Tensor<T>& grad(Var<T> v) { return grad(v.id()); }

  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = `seed` and propagates to every grad-enabled node.
  void backward(Var<T> loss, T seed = T{1}) {
    require(loss.value().size() == 1,
            [&] { return "backward requires a scalar loss, got shape " + shape_string(loss.shape()); });
    if (!requires_grad(loss.id())) return;
    grad(loss.id())[0] += seed;
    for (std::uint32_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, id);
    }
  }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* borrowed = nullptr;
    Tensor<T> grad;
    Tensor<T>* grad_sink = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var<T> push(Node n) {
    nodes_.push_back(std::move(n));
    return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  bool recording_;
  std::vector<Node> nodes_;
};

}  // namespace tet
