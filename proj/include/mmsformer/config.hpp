// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mmsformer/kv.hpp"
#include "mmsformer/tensor.hpp"

namespace mms {

struct StageConfig {
  Index depth = 1;
  Index channels = 8;
  Index heads = 1;
  Index reduction_ratio = 1;
  Index ffn_expansion = 4;
  // Overlapping patch embedding (stage 1) or patch merging (stages 2-4).
  Index patch_kernel = 3;
  Index patch_stride = 2;
  Index patch_pad = 1;

  bool operator==(const StageConfig&) const = default;
};

inline constexpr std::size_t kNumStages = 4;

struct EncoderConfig {
  std::array<StageConfig, kNumStages> stages;
  Index in_channels = 3;

  /// Cumulative stride of stage i's output relative to the input.
  Index stage_stride(std::size_t stage) const;
  bool operator==(const EncoderConfig&) const = default;
};

enum class ConvGrouping { depthwise, dense };

struct FusionConfig {
  std::vector<Index> kernel_sizes{3, 5, 7};
  Index se_reduction = 16;
  ConvGrouping conv_grouping = ConvGrouping::depthwise;
  bool enable_channel_attention = true;
  bool enable_parallel_convs = true;
  bool linear_only = false;

  /// Hidden width of the SE bottleneck for C channels: ceil(C / r).
  Index se_hidden(Index channels) const;
  bool operator==(const FusionConfig&) const = default;
};

struct DecoderConfig {
  Index embed_dim = 32;
  Index num_classes = 5;

  bool operator==(const DecoderConfig&) const = default;
};

/// Fusion-block ablation lattice, in report order.
enum class Variant { full, no_channel_attention, no_parallel_convs, kernels_3_7_11, linear_only };

inline constexpr std::array<Variant, 5> kAllVariants{Variant::full, Variant::no_channel_attention,
                                                     Variant::no_parallel_convs, Variant::kernels_3_7_11,
                                                     Variant::linear_only};

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);
std::string to_string(ConvGrouping g);

struct ModelConfig {
  Index num_modalities = 1;
  EncoderConfig encoder;
  FusionConfig fusion;
  DecoderConfig decoder;
  Variant variant = Variant::full;
  std::uint64_t seed = 0;

  /// Fusion settings after the variant has rewritten the flags.
  FusionConfig resolved_fusion() const;

  /// Raises ConfigError on any inconsistent setting.
  void validate() const;

  /// Input extents must be multiples of this (the deepest stage stride).
  Index input_multiple() const { return encoder.stage_stride(kNumStages - 1); }

  /// Desk-scale defaults: channels (8,16,32,64), depth 1 per stage, D = 32.
  static ModelConfig desk();
  /// Full-width preset (64,128,320,512), depths (3,4,6,3), D = 768. Used by
  /// the cost model; far too large to train here.
  static ModelConfig full_scale();

  KeyValues to_key_values() const;
  /// Reads `model.*`, `encoder.*`, `fusion.*` and `decoder.*` keys on top of
  /// `base`; other prefixes are ignored. Unknown keys under these prefixes
  /// raise ConfigError.
  static ModelConfig from_key_values(const KeyValues& kv, ModelConfig base = desk());

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace mms
