// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

#include "mmsformer/tensor.hpp"

namespace mms {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_leaf = 0;
  Index worst_index = 0;
  double autodiff = 0.0;
  double numeric = 0.0;
  Index coordinates_checked = 0;
};

/// Compares reverse-mode gradients of a scalar function with central
/// differences (f(x+h·e) − f(x−h·e)) / 2h. The per-coordinate error is
/// |autodiff − numeric| / max(1, |numeric|); the maximum is reported.
///
/// `f` reads the given leaves (which must require grad) and is re-evaluated
/// with each coordinate perturbed in place. `max_coords_per_leaf` > 0 checks
/// an evenly strided subset of each leaf's coordinates.
template <typename T>
GradCheckReport grad_check_leaves(const std::function<BasicTensor<T>()>& f,
                                  std::vector<BasicTensor<T>> leaves, T h,
                                  Index max_coords_per_leaf = 0);

/// Single-input form: max relative error of d f(x) / dx.
template <typename T>
double grad_check(const std::function<BasicTensor<T>(const BasicTensor<T>&)>& f,
                  const BasicTensor<T>& x, T h);

}  // namespace mms
