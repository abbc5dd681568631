// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "mmsformer/config.hpp"
#include "mmsformer/nn.hpp"

namespace mms {

/// Squeeze-and-excitation gate: global average pool, C -> C/r -> C with a
/// ReLU between, sigmoid on the output.
template <typename T>
class SeBlock {
 public:
  SeBlock() = default;
  SeBlock(ParamScope<T> scope, Index channels, Index hidden);

  /// Per-channel gate in (0,1), shape [C].
  BasicTensor<T> gate(const BasicTensor<T>& x) const;
  /// x scaled per channel by gate(x).
  BasicTensor<T> operator()(const BasicTensor<T>& x) const;

  Linear<T> fc1;
  Linear<T> fc2;
};

/// Per-stage fusion of M same-shaped modality features.
///
///   F̂ = Linear(F_1 ‖ … ‖ F_M)                    (M·C -> C per pixel)
///   F̃ = Linear(F̂)
///   main = Linear(F̃ + Σ_k Conv_k×k(F̃))
///   F = SE(F̂) + main
///
/// The ablation flags drop the SE term, the conv sum, or everything after
/// the first linear (linear_only returns F̂).
template <typename T>
class FusionBlock {
 public:
  FusionBlock() = default;
  FusionBlock(ParamScope<T> scope, Index channels, Index modalities, const FusionConfig& cfg);

  BasicTensor<T> linear_fuse(const std::vector<BasicTensor<T>>& features) const;
  BasicTensor<T> multi_scale_mix(const BasicTensor<T>& fused) const;
  BasicTensor<T> se_channel_attention(const BasicTensor<T>& fused) const;
  BasicTensor<T> operator()(const std::vector<BasicTensor<T>>& features) const;

  Index channels() const { return channels_; }
  Index modalities() const { return modalities_; }
  const FusionConfig& config() const { return cfg_; }

  Linear<T> fuse;
  std::optional<Linear<T>> proj_in;
  std::vector<Conv2d<T>> convs;
  std::optional<Linear<T>> proj_out;
  std::optional<SeBlock<T>> se;

 private:
  Index channels_ = 0;
  Index modalities_ = 0;
  FusionConfig cfg_;
};

}  // namespace mms
