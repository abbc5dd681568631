// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmsformer/ops.hpp"
#include "mmsformer/rng.hpp"

namespace mms {

template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> tensor;
};

/// Ordered, uniquely named parameter registry. Enumeration order is the
/// registration order, which is fixed by the architecture.
template <typename T>
class ParameterSet {
 public:
  BasicTensor<T> add(std::string name, BasicTensor<T> tensor) {
    if (!index_.emplace(name, items_.size()).second) {
      throw ConfigError("parameter name registered twice: " + name);
    }
    items_.push_back({std::move(name), tensor});
    return tensor;
  }

  const std::vector<Parameter<T>>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  const BasicTensor<T>* find(const std::string& name) const {
    const auto it = index_.find(name);
    return it == index_.end() ? nullptr : &items_[it->second].tensor;
  }

  Index total_elements() const {
    Index n = 0;
    for (const auto& p : items_) n += p.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : items_) p.tensor.zero_grad();
  }

  std::vector<BasicTensor<T>> tensors() const {
    std::vector<BasicTensor<T>> out;
    out.reserve(items_.size());
    for (const auto& p : items_) out.push_back(p.tensor);
    return out;
  }

 private:
  std::vector<Parameter<T>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Hands out named, initialized parameters under a dotted prefix.
template <typename T>
class ParamScope {
 public:
  ParamScope(ParameterSet<T>& params, Rng& rng, std::string prefix = {})
      : params_(&params), rng_(&rng), prefix_(std::move(prefix)) {}

  ParamScope child(const std::string& name) const {
    return ParamScope(*params_, *rng_, path(name));
  }

  std::string path(const std::string& name) const {
    return prefix_.empty() ? name : prefix_ + "." + name;
  }

  /// Truncated normal (±2σ), the transformer-linear init.
  BasicTensor<T> trunc_normal(const std::string& name, Shape shape, double stddev) {
    std::vector<T> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = static_cast<T>(rng_->truncated_normal(stddev));
    return params_->add(path(name), BasicTensor<T>::from(std::move(shape), std::move(v), true));
  }

  /// Normal with std sqrt(2 / fan_out), fan_out = k·k·Cout / groups.
  BasicTensor<T> kaiming_fan_out(const std::string& name, Shape shape, Index groups) {
    const double fan_out = static_cast<double>(shape[0] * shape[2] * shape[3]) / static_cast<double>(groups);
    const double stddev = std::sqrt(2.0 / fan_out);
    std::vector<T> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = static_cast<T>(rng_->normal() * stddev);
    return params_->add(path(name), BasicTensor<T>::from(std::move(shape), std::move(v), true));
  }

  BasicTensor<T> constant(const std::string& name, Shape shape, T value) {
    return params_->add(path(name), BasicTensor<T>::full(std::move(shape), value, true));
  }

 private:
  ParameterSet<T>* params_;
  Rng* rng_;
  std::string prefix_;
};

/// Channel map with weight [out,in] and bias [out]. Applied either to token
/// matrices [N,in] or per pixel to feature maps [in,H,W].
template <typename T>
struct Linear {
  BasicTensor<T> weight;
  std::optional<BasicTensor<T>> bias;

  Linear() = default;
  Linear(ParamScope<T> scope, Index in, Index out, bool with_bias = true) {
    weight = scope.trunc_normal("weight", {out, in}, 0.02);
    if (with_bias) bias = scope.constant("bias", {out}, T(0));
  }

  Index in_features() const { return weight.dim(1); }
  Index out_features() const { return weight.dim(0); }

  BasicTensor<T> tokens(const BasicTensor<T>& x) const { return ops::linear(x, weight, bias); }
  BasicTensor<T> map(const BasicTensor<T>& x) const { return ops::pointwise(x, weight, bias); }
};

template <typename T>
struct Conv2d {
  BasicTensor<T> weight;
  std::optional<BasicTensor<T>> bias;
  ops::ConvGeometry geometry;

  Conv2d() = default;
  Conv2d(ParamScope<T> scope, Index in, Index out, Index kernel, ops::ConvGeometry geo,
         bool with_bias = true)
      : geometry(geo) {
    if (geo.groups <= 0 || in % geo.groups != 0 || out % geo.groups != 0) {
      throw ConfigError("conv " + scope.path("weight") + ": channels " + std::to_string(in) + "->" +
                        std::to_string(out) + " not divisible by groups " + std::to_string(geo.groups));
    }
    weight = scope.kaiming_fan_out("weight", {out, in / geo.groups, kernel, kernel}, geo.groups);
    if (with_bias) bias = scope.constant("bias", {out}, T(0));
  }

  Index kernel() const { return weight.dim(2); }

  BasicTensor<T> operator()(const BasicTensor<T>& x) const {
    return ops::conv2d(x, weight, bias, geometry);
  }
};

template <typename T>
struct LayerNorm {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  T eps = T(1e-6);

  LayerNorm() = default;
  LayerNorm(ParamScope<T> scope, Index channels, T epsilon = T(1e-6)) : eps(epsilon) {
    gamma = scope.constant("gamma", {channels}, T(1));
    beta = scope.constant("beta", {channels}, T(0));
  }

  BasicTensor<T> operator()(const BasicTensor<T>& x) const { return ops::layer_norm(x, gamma, beta, eps); }
};

}  // namespace mms
