// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "nlf/tensor.hpp"

namespace nlf {

/// A value in the computation graph. Leaves with `requires_grad` are
/// parameters; their `grad` persists and accumulates across backward calls.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  bool leaf = true;
  std::string name;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;

  /// The gradient buffer, zero-initialised on first use.
  Tensor<T>& grad_buffer() {
    if (grad.dims() != value.dims()) grad = Tensor<T>(value.dims());
    return grad;
  }
};

/// Shared handle to a graph node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  /// A value that never receives a gradient.
  static Var constant(Tensor<T> value);
  /// A named trainable leaf with a zeroed gradient buffer.
  static Var parameter(Tensor<T> value, std::string name);

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& mutable_grad() { return node_->grad_buffer(); }
  const std::string& name() const { return node_->name; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  void zero_grad();

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
using Parameter = Var<T>;

/// While alive on a thread, ops record no graph and intermediate values are
/// released as soon as they go out of scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

/// Builds the output node of an op. When grad mode is off or no parent needs a
/// gradient, the node is a detached constant and `backward_fn` is dropped.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents,
                   std::function<void(Node<T>&)> backward_fn);

/// Reverse-mode sweep from a scalar. Parameter gradients accumulate.
/// Throws std::logic_error when `loss` has no path to any parameter.
template <typename T>
void backward(const Var<T>& loss);

extern template class Var<float>;
extern template class Var<double>;

}  // namespace nlf
