// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmsformer/encoder.hpp"

#include <cmath>

namespace mms {

template <typename T>
BasicTensor<T> spatial_reduce(const BasicTensor<T>& tokens, Index ratio, const Linear<T>& projection,
                              const LayerNorm<T>& norm) {
  if (tokens.rank() != 2) throw ShapeError("spatial_reduce: expected [N,C], got " + to_string(tokens.shape()));
  const Index n = tokens.dim(0);
  const Index c = tokens.dim(1);
  if (ratio < 1 || n % ratio != 0) {
    throw ShapeError("spatial_reduce: " + std::to_string(n) + " tokens not divisible by reduction ratio " +
                     std::to_string(ratio));
  }
  if (projection.in_features() != c * ratio || projection.out_features() != c) {
    throw ShapeError("spatial_reduce: projection " + to_string(projection.weight.shape()) + " cannot map " +
                     std::to_string(c * ratio) + " -> " + std::to_string(c));
  }
  const auto grouped = ops::reshape(tokens, {n / ratio, c * ratio});
  return norm(projection.tokens(grouped));
}

template <typename T>
EfficientAttention<T>::EfficientAttention(ParamScope<T> scope, const StageConfig& cfg)
    : channels_(cfg.channels), heads_(cfg.heads), ratio_(cfg.reduction_ratio) {
  if (cfg.channels % cfg.heads != 0) {
    throw ConfigError("attention: channels " + std::to_string(cfg.channels) + " not divisible by " +
                      std::to_string(cfg.heads) + " heads");
  }
  query = Linear<T>(scope.child("wq"), channels_, channels_);
  key = Linear<T>(scope.child("wk"), channels_, channels_);
  value = Linear<T>(scope.child("wv"), channels_, channels_);
  if (ratio_ > 1) {
    reduce = Linear<T>(scope.child("sr"), channels_ * ratio_, channels_);
    reduce_norm = LayerNorm<T>(scope.child("sr_norm"), channels_);
  }
  output = Linear<T>(scope.child("wo"), channels_, channels_);
}

template <typename T>
BasicTensor<T> EfficientAttention<T>::operator()(const BasicTensor<T>& x,
                                                 std::vector<BasicTensor<T>>* attention) const {
  if (x.rank() != 2 || x.dim(1) != channels_) {
    throw ShapeError("attention: expected [N," + std::to_string(channels_) + "], got " + to_string(x.shape()));
  }
  const Index n = x.dim(0);
  if (n % ratio_ != 0) {
    throw ShapeError("attention: " + std::to_string(n) + " tokens not divisible by reduction ratio " +
                     std::to_string(ratio_));
  }
  const auto context = reduce ? spatial_reduce(x, ratio_, *reduce, *reduce_norm) : x;
  const auto q = query.tokens(x);
  const auto k = key.tokens(context);
  const auto v = value.tokens(context);
  const Index d = channels_ / heads_;
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(d));
  std::vector<BasicTensor<T>> heads;
  heads.reserve(static_cast<std::size_t>(heads_));
  for (Index h = 0; h < heads_; ++h) {
    const auto qh = ops::narrow(q, 1, h * d, d);
    const auto kh = ops::narrow(k, 1, h * d, d);
    const auto vh = ops::narrow(v, 1, h * d, d);
    const auto weights = ops::softmax(ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt_d), 1);
    if (attention) attention->push_back(weights);
    heads.push_back(ops::matmul(weights, vh));
  }
  const auto merged = heads_ == 1 ? heads.front() : ops::concat(heads, 1);
  return output.tokens(merged);
}

template <typename T>
MixFfn<T>::MixFfn(ParamScope<T> scope, Index channels, Index expansion) {
  const Index hidden = channels * expansion;
  fc1 = Linear<T>(scope.child("fc1"), channels, hidden);
  dwconv = Conv2d<T>(scope.child("dwconv"), hidden, hidden, 3, {.stride = 1, .pad = 1, .groups = hidden});
  fc2 = Linear<T>(scope.child("fc2"), hidden, channels);
}

template <typename T>
BasicTensor<T> MixFfn<T>::branch(const BasicTensor<T>& x, Index height, Index width) const {
  if (x.rank() != 2 || x.dim(0) != height * width) {
    throw ShapeError("mix_ffn: " + to_string(x.shape()) + " tokens do not tile a " + std::to_string(height) +
                     "x" + std::to_string(width) + " grid");
  }
  const auto hidden = fc1.tokens(x);
  const auto grid = ops::tokens_to_map(hidden, height, width);
  const auto mixed = ops::gelu(dwconv(grid));
  return fc2.tokens(ops::map_to_tokens(mixed));
}

template <typename T>
BasicTensor<T> MixFfn<T>::operator()(const BasicTensor<T>& x, Index height, Index width) const {
  return ops::add(branch(x, height, width), x);
}

template <typename T>
MitBlock<T>::MitBlock(ParamScope<T> scope, const StageConfig& cfg)
    : norm1(scope.child("norm1"), cfg.channels),
      attn(scope.child("attn"), cfg),
      norm2(scope.child("norm2"), cfg.channels),
      ffn(scope.child("ffn"), cfg.channels, cfg.ffn_expansion) {}

template <typename T>
BasicTensor<T> MitBlock<T>::operator()(const BasicTensor<T>& x, Index height, Index width,
                                       std::vector<BasicTensor<T>>* attention) const {
  const auto y = ops::add(x, attn(norm1(x), attention));
  return ops::add(y, ffn.branch(norm2(y), height, width));
}

template <typename T>
MitStage<T>::MitStage(ParamScope<T> scope, Index in_channels, const StageConfig& cfg)
    : patch(scope.child("patch"), in_channels, cfg.channels, cfg.patch_kernel,
            {.stride = cfg.patch_stride, .pad = cfg.patch_pad, .groups = 1}),
      patch_norm(scope.child("patch_norm"), cfg.channels) {
  for (Index b = 0; b < cfg.depth; ++b) blocks.emplace_back(scope.child("block" + std::to_string(b + 1)), cfg);
  norm = LayerNorm<T>(scope.child("norm"), cfg.channels);
}

template <typename T>
BasicTensor<T> MitStage<T>::embed(const BasicTensor<T>& x) const {
  const auto map = patch(x);
  const auto tokens = patch_norm(ops::map_to_tokens(map));
  return ops::tokens_to_map(tokens, map.dim(1), map.dim(2));
}

template <typename T>
BasicTensor<T> MitStage<T>::operator()(const BasicTensor<T>& x, std::vector<BasicTensor<T>>* attention) const {
  const auto map = patch(x);
  const Index h = map.dim(1);
  const Index w = map.dim(2);
  auto tokens = patch_norm(ops::map_to_tokens(map));
  for (const auto& block : blocks) tokens = block(tokens, h, w, attention);
  return ops::tokens_to_map(norm(tokens), h, w);
}

template <typename T>
MitEncoder<T>::MitEncoder(ParamScope<T> scope, const EncoderConfig& cfg) : cfg_(cfg) {
  Index in = cfg.in_channels;
  for (std::size_t i = 0; i < kNumStages; ++i) {
    stages[i] = MitStage<T>(scope.child("stage" + std::to_string(i + 1)), in, cfg.stages[i]);
    in = cfg.stages[i].channels;
  }
}

template <typename T>
void MitEncoder<T>::check_input(const BasicTensor<T>& image) const {
  const Index multiple = cfg_.stage_stride(kNumStages - 1);
  if (image.rank() != 3 || image.dim(0) != cfg_.in_channels) {
    throw ConfigError("encoder: expected a [" + std::to_string(cfg_.in_channels) + ",H,W] image, got " +
                      to_string(image.shape()));
  }
  if (image.dim(1) % multiple != 0 || image.dim(2) % multiple != 0) {
    throw ConfigError("encoder: image extents " + std::to_string(image.dim(1)) + "x" +
                      std::to_string(image.dim(2)) + " must both be divisible by " + std::to_string(multiple));
  }
}

template <typename T>
BasicTensor<T> MitEncoder<T>::overlap_patch_embed(const BasicTensor<T>& image) const {
  check_input(image);
  return stages[0].embed(image);
}

template <typename T>
FeaturePyramid<T> MitEncoder<T>::encode(const BasicTensor<T>& image,
                                        std::vector<BasicTensor<T>>* attention) const {
  check_input(image);
  FeaturePyramid<T> pyramid;
  BasicTensor<T> x = image;
  for (std::size_t i = 0; i < kNumStages; ++i) {
    x = stages[i](x, attention);
    pyramid[i] = x;
  }
  return pyramid;
}

#define MMS_INSTANTIATE(T)                                                                          \
  template BasicTensor<T> spatial_reduce(const BasicTensor<T>&, Index, const Linear<T>&,            \
                                         const LayerNorm<T>&);                                      \
  template class EfficientAttention<T>;                                                             \
  template class MixFfn<T>;                                                                         \
  template class MitBlock<T>;                                                                       \
  template class MitStage<T>;                                                                       \
  template class MitEncoder<T>;

MMS_INSTANTIATE(float)
MMS_INSTANTIATE(double)
#undef MMS_INSTANTIATE

}  // namespace mms
