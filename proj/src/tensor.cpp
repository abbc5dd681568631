// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmsformer/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace mms {

namespace {
thread_local bool g_grad_enabled = true;
bool g_finite_checks = false;
}  // namespace

Index numel(const Shape& shape) {
  Index n = 1;
  for (const Index d : shape) {
    if (d <= 0) throw ShapeError("tensor: non-positive extent in shape " + to_string(shape));
    n *= d;
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks() { return g_finite_checks; }

void detail::raise_non_finite(const char* op) {
  throw NumericError(std::string("non-finite value produced by op '") + op + "'");
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + to_string(shape()) + " is not a scalar");
  return node_->data[0];
}

template <typename T>
T BasicTensor<T>::at(std::initializer_list<Index> index) const {
  if (static_cast<Index>(index.size()) != rank()) {
    throw ShapeError("at: rank " + std::to_string(index.size()) + " index into shape " + to_string(shape()));
  }
  Index flat = 0;
  std::size_t axis = 0;
  for (const Index i : index) {
    const Index extent = node_->shape[axis++];
    if (i < 0 || i >= extent) throw ShapeError("at: index out of range for shape " + to_string(shape()));
    flat = flat * extent + i;
  }
  return node_->data[static_cast<std::size_t>(flat)];
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  if (node_->requires_grad) node_->grad.assign(node_->data.size(), T(0));
}

template <typename T>
void BasicTensor<T>::backward() const {
  Graph<T>(*this).backward();
}

template <typename T>
Graph<T>::Graph(const BasicTensor<T>& root) : root_(root.node()) {
  if (!root_) throw GraphError("backward: undefined root tensor");
  // Iterative post-order DFS; order_ ends up topologically sorted with the
  // root last.
  std::unordered_set<const detail::Node<T>*> seen;
  std::vector<std::pair<detail::NodePtr<T>, std::size_t>> stack;
  stack.emplace_back(root_, 0);
  seen.insert(root_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto child = node->inputs[next++];
      if (child->requires_grad && seen.insert(child.get()).second) stack.emplace_back(child, 0);
    } else {
      order_.push_back(node);
      stack.pop_back();
    }
  }
}

template <typename T>
void Graph<T>::backward() {
  if (root_->consumed) throw GraphError("backward: graph already consumed; run a new forward pass");
  if (!root_->requires_grad) throw GraphError("backward: root does not require grad");
  if (root_->data.size() != 1) {
    throw GraphError("backward: root must be scalar, got shape " + to_string(root_->shape));
  }
  for (auto& node : order_) {
    if (node->requires_grad && node->grad.size() != node->data.size()) {
      node->grad.assign(node->data.size(), T(0));
    }
  }
  root_->grad[0] += T(1);
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    auto& node = **it;
    if (node.backward) node.backward(node);
  }
  for (auto& node : order_) {
    if (node->backward) {
      node->backward = nullptr;
      node->inputs.clear();
      node->consumed = true;
    }
  }
}

template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> values, const char* op,
                           const std::vector<BasicTensor<T>>& inputs,
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
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return BasicTensor<T>(std::move(node));
}

template <typename T>
void check_finite(const BasicTensor<T>& t, const std::string& what) {
  const auto values = t.data();
  const auto bad = std::find_if(values.begin(), values.end(),
                                [](T v) { return !std::isfinite(static_cast<double>(v)); });
  if (bad != values.end()) {
    throw NumericError(what + ": non-finite value at flat index " +
                       std::to_string(bad - values.begin()));
  }
}

#define MMS_INSTANTIATE(T)                                                                      \
  template class BasicTensor<T>;                                                                \
  template class Graph<T>;                                                                      \
  template BasicTensor<T> make_result(Shape, std::vector<T>, const char*,                       \
                                      const std::vector<BasicTensor<T>>&,                       \
                                      std::function<void(detail::Node<T>&)>);                   \
  template void check_finite(const BasicTensor<T>&, const std::string&);

MMS_INSTANTIATE(float)
MMS_INSTANTIATE(double)
#undef MMS_INSTANTIATE

}  // namespace mms
