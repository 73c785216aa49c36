#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "dynfire/tensor.hpp"

namespace dynfire {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only record of primitive applications for reverse-mode
/// differentiation. Inputs always precede the nodes that consume them, so a
/// single reverse sweep over the node list is a valid topological order.
template <typename T>
class Tape {
 public:
  /// Propagates the gradient of node `self` into its inputs.
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push("const", std::move(value), false, {}); }

  Var<T> parameter(Tensor<T> value) { return push("param", std::move(value), true, {}); }

  /// Records an op output. It requires a gradient when any input does.
  Var<T> record(const char* op, Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward backward) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || requires_grad(in.id());
    return push(op, std::move(value), needs, needs ? std::move(backward) : Backward{});
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  const char* op_name(std::size_t id) const { return nodes_.at(id).op; }
  std::size_t size() const noexcept { return nodes_.size(); }

  bool has_grad(std::size_t id) const { return !nodes_.at(id).grad.empty(); }

  /// Gradient of `id`, zero-filled if nothing has flowed into it.
  Tensor<T> grad(std::size_t id) const {
    const Node& n = nodes_.at(id);
    if (n.grad.empty()) return Tensor<T>(n.value.shape());
    return Tensor<T>(n.value.shape(), n.grad);
  }
  Tensor<T> grad(const Var<T>& v) const { return grad(v.id()); }

  /// Accumulation buffer for `id`, allocated on first use.
  std::vector<T>& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), T{0});
    return n.grad;
  }

  /// Seeds d(root)/d(root) = 1 and sweeps backward. Root must be scalar.
  void backward(const Var<T>& root) {
    if (root.value().size() != 1) {
      throw DimensionError("backward() needs a scalar root, got shape " + shape_str(root.shape()));
    }
    if (!requires_grad(root.id())) return;
    grad_buffer(root.id())[0] += T{1};
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
      n.backward(*this, i);
    }
  }

 private:
  struct Node {
    const char* op;
    Tensor<T> value;
    std::vector<T> grad;
    bool requires_grad;
    Backward backward;
  };

  Var<T> push(const char* op, Tensor<T> value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{op, std::move(value), {}, requires_grad, std::move(backward)});
    return Var<T>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

}  // namespace dynfire
