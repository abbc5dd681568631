// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmsformer/config.hpp"
#include "mmsformer/records.hpp"

namespace mms {

// FLOP convention: every multiply-accumulate of a linear map, convolution or
// attention product counts 2, every bias add counts 1. Normalization,
// activations, softmax, pooling, resampling and residual or branch additions
// are not counted. `macs` holds the bare multiply-accumulate count.
struct CostNode {
  std::string name;
  std::int64_t params = 0;
  std::int64_t macs = 0;
  std::int64_t flops = 0;
  std::vector<CostNode> children;

  /// Node at a dotted path relative to this one, or nullptr.
  const CostNode* find(const std::string& path) const;
};

struct CostReport {
  ModelConfig config;
  Index height = 0;  // 0 when only parameters were counted
  Index width = 0;
  CostNode root;

  const CostNode& encoders() const;
  const CostNode& fusion() const;
  const CostNode& decoder() const;

  /// Indented tree with parameter counts and GFLOPs (2 decimals), down to
  /// `max_depth` levels below the root (negative: everything).
  std::string to_text(int max_depth = -1) const;
  /// One record per node: path, depth, params, macs, flops, gflops.
  std::vector<Json> to_records() const;
};

CostReport count_params(const ModelConfig& config);
/// Per-modality input [3,H,W]; H and W must be multiples of 32.
CostReport count_flops(const ModelConfig& config, Index height, Index width);

inline constexpr double kPaperFusionParamsM = 3.23;
inline constexpr double kPaperFusionGflops = 2.47;

/// Fusion-block totals of the full-scale preset (M = 4, 512×512) next to the
/// published figures. Deviations are signed fractions, (ours − paper) / paper.
struct FusionCostComparison {
  double params_m = 0.0;
  double gflops = 0.0;   // 2 FLOPs per multiply-accumulate
  double gmacs = 0.0;    // 1 per multiply-accumulate
  double params_deviation = 0.0;
  double gflops_deviation = 0.0;
  double gmacs_deviation = 0.0;
  std::string assumptions;

  std::string to_text() const;
};

FusionCostComparison compare_fusion_with_paper(const ModelConfig& config, Index height = 512, Index width = 512);
/// Same, for ModelConfig::full_scale() with four modalities.
FusionCostComparison compare_fusion_with_paper();

}  // namespace mms
