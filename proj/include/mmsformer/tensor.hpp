// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mmsformer/error.hpp"

namespace mms {

using Index = std::int64_t;
using Shape = std::vector<Index>;

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Autodiff recording switch for the current thread. Evaluation code wraps
/// forward passes in a NoGradGuard so no graph is retained.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// When enabled, every op output is scanned for NaN/Inf and a NumericError is
/// raised at the first offending op. Off by default.
void set_finite_checks(bool enabled);
bool finite_checks();

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  bool consumed = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

void raise_non_finite(const char* op);

}  // namespace detail

/// Dense row-major tensor handle. Copies share storage; the value is treated
/// as immutable once produced by an op. Leaves (parameters, inputs) may be
/// written through mutable_data().
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  static BasicTensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (mms::numel(shape) != static_cast<Index>(values.size())) {
      throw ShapeError("tensor: shape " + to_string(shape) + " holds " +
                       std::to_string(mms::numel(shape)) + " values, got " +
                       std::to_string(values.size()));
    }
    auto node = std::make_shared<detail::Node<T>>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    if (requires_grad) node->grad.assign(node->data.size(), T(0));
    return BasicTensor(std::move(node));
  }

  static BasicTensor full(Shape shape, T value, bool requires_grad = false) {
    const auto n = static_cast<std::size_t>(mms::numel(shape));
    return from(std::move(shape), std::vector<T>(n, value), requires_grad);
  }

  static BasicTensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }

  static BasicTensor scalar(T value, bool requires_grad = false) {
    return from({1}, {value}, requires_grad);
  }

  explicit BasicTensor(detail::NodePtr<T> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index dim(Index axis) const { return node_->shape.at(static_cast<std::size_t>(axis)); }
  Index numel() const { return static_cast<Index>(node_->data.size()); }

  std::span<const T> data() const { return node_->data; }
  std::span<T> mutable_data() { return node_->data; }
  T item() const;
  T at(std::initializer_list<Index> index) const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad; }
  void zero_grad();

  /// Reverse-mode sweep from this scalar-valued tensor.
  void backward() const;

  /// Same values, no history, no gradient.
  BasicTensor detach() const { return from(shape(), node_->data, false); }

  const detail::NodePtr<T>& node() const { return node_; }

 private:
  detail::NodePtr<T> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Topologically ordered record of the ops that produced a root tensor.
template <typename T>
class Graph {
 public:
  explicit Graph(const BasicTensor<T>& root);

  std::span<const detail::NodePtr<T>> nodes() const { return order_; }

  /// Seeds d(root)/d(root) = 1 and accumulates gradients into every
  /// requires_grad node. Releases the saved activations afterwards; a second
  /// call on the same root raises GraphError.
  void backward();

 private:
  detail::NodePtr<T> root_;
  std::vector<detail::NodePtr<T>> order_;
};

/// Builds an op result. When recording is on and any input needs a gradient,
/// the result keeps its inputs and the backward closure.
template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> values, const char* op,
                           std::initializer_list<BasicTensor<T>> inputs,
                           std::function<void(detail::Node<T>&)> backward) {
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->op = op;
  if (finite_checks()) {
    for (const T v : node->data) {
      if (!std::isfinite(static_cast<double>(v))) detail::raise_non_finite(op);
    }
  }
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return BasicTensor<T>(std::move(node));
}

/// make_result for a runtime-sized input list (concat).
template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> values, const char* op,
                           const std::vector<BasicTensor<T>>& inputs,
                           std::function<void(detail::Node<T>&)> backward);

/// Gradient slot of a recorded input, or nullptr when it needs none.
template <typename T>
inline T* input_grad(detail::Node<T>& self, std::size_t i) {
  auto& in = *self.inputs[i];
  return in.requires_grad ? in.grad.data() : nullptr;
}

template <typename T>
void check_finite(const BasicTensor<T>& t, const std::string& what);

}  // namespace mms
