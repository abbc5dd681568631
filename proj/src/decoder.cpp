// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmsformer/decoder.hpp"

namespace mms {

template <typename T>
MlpDecoder<T>::MlpDecoder(ParamScope<T> scope, const std::array<Index, kNumStages>& level_channels,
                          const DecoderConfig& cfg)
    : level_channels_(level_channels) {
  for (std::size_t i = 0; i < kNumStages; ++i) {
    levels[i] = Linear<T>(scope.child("level" + std::to_string(i + 1)), level_channels[i], cfg.embed_dim);
  }
  fuse = Linear<T>(scope.child("fuse"), kNumStages * cfg.embed_dim, cfg.embed_dim);
  classifier = Linear<T>(scope.child("classifier"), cfg.embed_dim, cfg.num_classes);
}

template <typename T>
BasicTensor<T> MlpDecoder<T>::operator()(const FeaturePyramid<T>& pyramid) const {
  const auto& top = pyramid[0];
  if (top.rank() != 3) throw ShapeError("decode: level 1 has shape " + to_string(top.shape()));
  const Index h = top.dim(1);
  const Index w = top.dim(2);
  std::vector<BasicTensor<T>> embedded;
  embedded.reserve(kNumStages);
  for (std::size_t i = 0; i < kNumStages; ++i) {
    const auto& level = pyramid[i];
    const Index factor = Index{1} << i;
    if (level.rank() != 3 || level.dim(0) != level_channels_[i] || level.dim(1) * factor != h ||
        level.dim(2) * factor != w) {
      throw ShapeError("decode: level " + std::to_string(i + 1) + " has shape " + to_string(level.shape()) +
                       ", expected [" + std::to_string(level_channels_[i]) + "," + std::to_string(h / factor) +
                       "," + std::to_string(w / factor) + "]");
    }
    auto e = levels[i].map(level);
    if (i > 0) e = ops::bilinear_upsample(e, h, w);
    embedded.push_back(e);
  }
  const auto fused = fuse.map(ops::concat(embedded, 0));
  return classifier.map(fused);
}

template <typename T>
LabelMap predict_labels(const BasicTensor<T>& logits) {
  if (logits.rank() != 3 || logits.dim(0) < 2) {
    throw ShapeError("predict_labels: expected [K>=2,H,W] logits, got " + to_string(logits.shape()));
  }
  const Index k = logits.dim(0);
  const Index h = logits.dim(1);
  const Index w = logits.dim(2);
  const Index plane = h * w;
  const auto v = logits.data();
  LabelMap out(h, w);
  for (Index p = 0; p < plane; ++p) {
    Index best = 0;
    T best_value = v[static_cast<std::size_t>(p)];
    for (Index c = 1; c < k; ++c) {
      const T value = v[static_cast<std::size_t>(c * plane + p)];
      if (value > best_value) {
        best = c;
        best_value = value;
      }
    }
    out.labels[static_cast<std::size_t>(p)] = static_cast<std::uint8_t>(best);
  }
  return out;
}

template class MlpDecoder<float>;
template class MlpDecoder<double>;
template LabelMap predict_labels(const BasicTensor<float>&);
template LabelMap predict_labels(const BasicTensor<double>&);

}  // namespace mms
