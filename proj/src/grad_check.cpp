// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmsformer/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace mms {

template <typename T>
GradCheckReport grad_check_leaves(const std::function<BasicTensor<T>()>& f,
                                  std::vector<BasicTensor<T>> leaves, T h,
                                  Index max_coords_per_leaf) {
  if (!(h > T(0))) throw ContractError("grad_check: step h must be positive");
  for (auto& leaf : leaves) {
    if (!leaf.requires_grad()) throw ContractError("grad_check: every leaf must require grad");
    leaf.zero_grad();
  }
  const BasicTensor<T> y = f();
  if (y.numel() != 1) {
    throw ContractError("grad_check: function output must be scalar, got shape " + to_string(y.shape()));
  }
  y.backward();
  std::vector<std::vector<T>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& leaf : leaves) analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto values = leaves[l].mutable_data();
    const Index n = static_cast<Index>(values.size());
    const Index stride = (max_coords_per_leaf > 0 && n > max_coords_per_leaf)
                             ? (n + max_coords_per_leaf - 1) / max_coords_per_leaf
                             : 1;
    for (Index i = 0; i < n; i += stride) {
      const auto at = static_cast<std::size_t>(i);
      const T saved = values[at];
      values[at] = saved + h;
      const double plus = static_cast<double>(f().item());
      values[at] = saved - h;
      const double minus = static_cast<double>(f().item());
      values[at] = saved;
      // Divide by the step actually taken after rounding to T.
      const double step = static_cast<double>(T(saved + h)) - static_cast<double>(T(saved - h));
      const double numeric = (plus - minus) / step;
      const double ad = static_cast<double>(analytic[l][at]);
      const double err = std::abs(ad - numeric) / std::max(1.0, std::abs(numeric));
      ++report.coordinates_checked;
      if (err > report.max_rel_error || report.coordinates_checked == 1) {
        report.max_rel_error = err;
        report.worst_leaf = l;
        report.worst_index = i;
        report.autodiff = ad;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

template <typename T>
double grad_check(const std::function<BasicTensor<T>(const BasicTensor<T>&)>& f,
                  const BasicTensor<T>& x, T h) {
  auto leaf = BasicTensor<T>::from(x.shape(), std::vector<T>(x.data().begin(), x.data().end()), true);
  return grad_check_leaves<T>([&] { return f(leaf); }, {leaf}, h).max_rel_error;
}

template GradCheckReport grad_check_leaves(const std::function<BasicTensor<float>()>&,
                                           std::vector<BasicTensor<float>>, float, Index);
template GradCheckReport grad_check_leaves(const std::function<BasicTensor<double>()>&,
                                           std::vector<BasicTensor<double>>, double, Index);
template double grad_check(const std::function<BasicTensor<float>(const BasicTensor<float>&)>&,
                           const BasicTensor<float>&, float);
template double grad_check(const std::function<BasicTensor<double>(const BasicTensor<double>&)>&,
                           const BasicTensor<double>&, double);

}  // namespace mms
