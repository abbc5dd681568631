// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <vector>

#include "mmsformer/config.hpp"
#include "mmsformer/decoder.hpp"
#include "mmsformer/encoder.hpp"
#include "mmsformer/fusion.hpp"

namespace mms {

/// M modality-specific encoders, four per-stage fusion blocks and one shared
/// MLP decoder. Parameters are initialized deterministically from
/// config.seed in a fixed order: encoders, fusion blocks, decoder.
template <typename T>
class MmsFormer {
 public:
  explicit MmsFormer(const ModelConfig& config);

  MmsFormer(const MmsFormer&) = delete;
  MmsFormer& operator=(const MmsFormer&) = delete;
  MmsFormer(MmsFormer&&) noexcept = default;
  MmsFormer& operator=(MmsFormer&&) noexcept = default;

  /// Raises ArityError / ShapeError / ConfigError for bad image lists.
  void check_inputs(const std::vector<BasicTensor<T>>& images) const;

  std::vector<FeaturePyramid<T>> encode(const std::vector<BasicTensor<T>>& images) const;
  FeaturePyramid<T> fuse(const std::vector<FeaturePyramid<T>>& per_modality) const;

  /// Decoder logits at 1/4 of the input resolution.
  BasicTensor<T> forward_quarter(const std::vector<BasicTensor<T>>& images) const;
  /// Logits [K,H,W], bilinearly upsampled to the input resolution.
  BasicTensor<T> forward(const std::vector<BasicTensor<T>>& images) const;

  const ModelConfig& config() const { return config_; }
  const FusionConfig& fusion_config() const { return fusion_config_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }

  /// Human-readable structure summary (stage widths, fusion kernels, counts).
  std::string summary() const;

  std::vector<MitEncoder<T>> encoders;
  std::array<FusionBlock<T>, kNumStages> fusion;
  MlpDecoder<T> decoder;

 private:
  ModelConfig config_;
  FusionConfig fusion_config_;
  ParameterSet<T> params_;
};

/// Copies parameter values by name (converting precision). Every parameter of
/// `dst` must exist in `src` with the same shape.
template <typename Dst, typename Src>
void copy_parameters(const ParameterSet<Src>& src, ParameterSet<Dst>& dst);

}  // namespace mms
