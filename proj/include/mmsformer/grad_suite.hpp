// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mms {

inline constexpr double kGradTolerance32 = 1e-2;
inline constexpr double kGradTolerance64 = 1e-5;

struct GradSuiteEntry {
  std::string name;
  double error32 = 0.0;
  double error64 = 0.0;
  long long coordinates = 0;  // per precision

  bool passed() const { return error32 <= kGradTolerance32 && error64 <= kGradTolerance64; }
};

/// Finite-difference checks of every differentiable op and of the composed
/// attention, Mix-FFN, encoder block, fusion block (all variants), decoder,
/// loss and a tiny full model, each run in 32- and 64-bit.
std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed = 0);

std::string format_gradient_suite(const std::vector<GradSuiteEntry>& entries);

}  // namespace mms
