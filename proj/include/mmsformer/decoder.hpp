// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mmsformer/config.hpp"
#include "mmsformer/encoder.hpp"
#include "mmsformer/nn.hpp"

namespace mms {

/// H×W raster of class indices; `kIgnoreIndex` marks unlabeled pixels.
struct LabelMap {
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(Index h, Index w, std::uint8_t fill = 0)
      : height(h), width(w), labels(static_cast<std::size_t>(h * w), fill) {}

  std::uint8_t at(Index y, Index x) const { return labels[static_cast<std::size_t>(y * width + x)]; }
  std::uint8_t& at(Index y, Index x) { return labels[static_cast<std::size_t>(y * width + x)]; }
  bool operator==(const LabelMap&) const = default;
};

inline constexpr std::uint8_t kIgnoreIndex = 255;

/// Shared MLP decoder: per-level C_i -> D, upsample to the stride-4 grid,
/// concat (levels 1..4), 4D -> D, D -> K.
template <typename T>
class MlpDecoder {
 public:
  MlpDecoder() = default;
  MlpDecoder(ParamScope<T> scope, const std::array<Index, kNumStages>& level_channels, const DecoderConfig& cfg);

  /// Logits [K, H/4, W/4] for a fused pyramid.
  BasicTensor<T> operator()(const FeaturePyramid<T>& pyramid) const;

  std::array<Linear<T>, kNumStages> levels;
  Linear<T> fuse;
  Linear<T> classifier;

 private:
  std::array<Index, kNumStages> level_channels_{};
};

/// Per-pixel argmax over the class axis of [K,H,W]; ties go to the lowest
/// class index.
template <typename T>
LabelMap predict_labels(const BasicTensor<T>& logits);

}  // namespace mms
