// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <vector>

#include "mmsformer/config.hpp"
#include "mmsformer/nn.hpp"

namespace mms {

/// Four per-stage feature maps at strides 4, 8, 16 and 32.
template <typename T>
using FeaturePyramid = std::array<BasicTensor<T>, kNumStages>;

/// Reshapes tokens [N,C] to [N/R, C·R] (row-major, so R consecutive tokens
/// become one row), projects back to C channels and layer-normalizes.
template <typename T>
BasicTensor<T> spatial_reduce(const BasicTensor<T>& tokens, Index ratio, const Linear<T>& projection,
                              const LayerNorm<T>& norm);

/// Multi-head self-attention whose keys and values come from the spatially
/// reduced token set. With ratio 1 no reduction layer exists and this is
/// plain multi-head attention.
template <typename T>
class EfficientAttention {
 public:
  EfficientAttention() = default;
  EfficientAttention(ParamScope<T> scope, const StageConfig& cfg);

  /// [N,C] -> [N,C]. When `attention` is non-null, the per-head softmax
  /// weight matrices [N, N/R] are appended to it.
  BasicTensor<T> operator()(const BasicTensor<T>& x,
                            std::vector<BasicTensor<T>>* attention = nullptr) const;

  Index heads() const { return heads_; }
  Index ratio() const { return ratio_; }

  Linear<T> query, key, value, output;
  std::optional<Linear<T>> reduce;
  std::optional<LayerNorm<T>> reduce_norm;

 private:
  Index channels_ = 0;
  Index heads_ = 1;
  Index ratio_ = 1;
};

/// Linear C->eC, 3×3 depthwise conv over the token grid, GELU, linear eC->C.
template <typename T>
class MixFfn {
 public:
  MixFfn() = default;
  MixFfn(ParamScope<T> scope, Index channels, Index expansion);

  /// The feed-forward branch alone, without the residual.
  BasicTensor<T> branch(const BasicTensor<T>& x, Index height, Index width) const;
  /// branch(x) + x.
  BasicTensor<T> operator()(const BasicTensor<T>& x, Index height, Index width) const;

  Linear<T> fc1;
  Conv2d<T> dwconv;
  Linear<T> fc2;
};

/// Pre-norm block: y = x + attn(norm1(x)); out = y + ffn(norm2(y)).
template <typename T>
class MitBlock {
 public:
  MitBlock() = default;
  MitBlock(ParamScope<T> scope, const StageConfig& cfg);

  BasicTensor<T> operator()(const BasicTensor<T>& x, Index height, Index width,
                            std::vector<BasicTensor<T>>* attention = nullptr) const;

  LayerNorm<T> norm1;
  EfficientAttention<T> attn;
  LayerNorm<T> norm2;
  MixFfn<T> ffn;
};

/// Overlapping patch embedding/merging, `depth` blocks, and a closing norm.
template <typename T>
class MitStage {
 public:
  MitStage() = default;
  MitStage(ParamScope<T> scope, Index in_channels, const StageConfig& cfg);

  /// Strided conv + layer norm over channels: [Cin,H,W] -> [C,H/s,W/s].
  BasicTensor<T> embed(const BasicTensor<T>& x) const;
  BasicTensor<T> operator()(const BasicTensor<T>& x,
                            std::vector<BasicTensor<T>>* attention = nullptr) const;

  Conv2d<T> patch;
  LayerNorm<T> patch_norm;
  std::vector<MitBlock<T>> blocks;
  LayerNorm<T> norm;
};

/// One modality's hierarchical mix-transformer encoder.
template <typename T>
class MitEncoder {
 public:
  MitEncoder() = default;
  MitEncoder(ParamScope<T> scope, const EncoderConfig& cfg);

  /// Raises ConfigError unless the image is [in_channels, H, W] with H and W
  /// multiples of 32.
  void check_input(const BasicTensor<T>& image) const;

  /// First-stage overlapping patch embedding: [3,H,W] -> [C1,H/4,W/4].
  BasicTensor<T> overlap_patch_embed(const BasicTensor<T>& image) const;

  FeaturePyramid<T> encode(const BasicTensor<T>& image,
                           std::vector<BasicTensor<T>>* attention = nullptr) const;

  const EncoderConfig& config() const { return cfg_; }
  std::array<MitStage<T>, kNumStages> stages;

 private:
  EncoderConfig cfg_;
};

}  // namespace mms
