// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmsformer/fusion.hpp"

namespace mms {

template <typename T>
SeBlock<T>::SeBlock(ParamScope<T> scope, Index channels, Index hidden)
    : fc1(scope.child("fc1"), channels, hidden), fc2(scope.child("fc2"), hidden, channels) {}

template <typename T>
BasicTensor<T> SeBlock<T>::gate(const BasicTensor<T>& x) const {
  if (x.rank() != 3 || x.dim(0) != fc1.in_features()) {
    throw ShapeError("se_channel_attention: expected [" + std::to_string(fc1.in_features()) + ",H,W], got " +
                     to_string(x.shape()));
  }
  const Index c = x.dim(0);
  const auto squeeze = ops::reshape(ops::global_avg_pool(x), {1, c});
  const auto excite = fc2.tokens(ops::relu(fc1.tokens(squeeze)));
  return ops::reshape(ops::sigmoid(excite), {c});
}

template <typename T>
BasicTensor<T> SeBlock<T>::operator()(const BasicTensor<T>& x) const {
  return ops::scale_channels(x, gate(x));
}

template <typename T>
FusionBlock<T>::FusionBlock(ParamScope<T> scope, Index channels, Index modalities, const FusionConfig& cfg)
    : channels_(channels), modalities_(modalities), cfg_(cfg) {
  if (modalities < 1) throw ConfigError("fusion: need at least one modality");
  fuse = Linear<T>(scope.child("linear_fuse"), modalities * channels, channels);
  if (cfg.linear_only) return;
  proj_in = Linear<T>(scope.child("proj_in"), channels, channels);
  if (cfg.enable_parallel_convs) {
    const Index groups = cfg.conv_grouping == ConvGrouping::depthwise ? channels : 1;
    for (const Index k : cfg.kernel_sizes) {
      if (k < 1 || k % 2 == 0) {
        throw ConfigError("fusion: kernel size " + std::to_string(k) + " must be a positive odd integer");
      }
      convs.emplace_back(scope.child("conv" + std::to_string(k)), channels, channels, k,
                         ops::ConvGeometry{.stride = 1, .pad = (k - 1) / 2, .groups = groups});
    }
  }
  proj_out = Linear<T>(scope.child("proj_out"), channels, channels);
  if (cfg.enable_channel_attention) se = SeBlock<T>(scope.child("se"), channels, cfg.se_hidden(channels));
}

template <typename T>
BasicTensor<T> FusionBlock<T>::linear_fuse(const std::vector<BasicTensor<T>>& features) const {
  if (static_cast<Index>(features.size()) != modalities_) {
    throw ShapeError("linear_fuse: expected " + std::to_string(modalities_) + " modalities, got " +
                     std::to_string(features.size()));
  }
  const Shape& reference = features.front().shape();
  if (reference.size() != 3 || reference[0] != channels_) {
    throw ShapeError("linear_fuse: modality 0 has shape " + to_string(reference) + ", expected [" +
                     std::to_string(channels_) + ",H,W]");
  }
  for (std::size_t m = 1; m < features.size(); ++m) {
    if (features[m].shape() != reference) {
      throw ShapeError("linear_fuse: modality " + std::to_string(m) + " has shape " +
                       to_string(features[m].shape()) + ", expected " + to_string(reference));
    }
  }
  if (features.size() == 1) return fuse.map(features.front());
  // Per-modality column blocks, summed order-independently so that permuting
  // modalities together with the blocks reproduces the output bit for bit.
  std::vector<BasicTensor<T>> parts;
  parts.reserve(features.size());
  for (std::size_t m = 0; m < features.size(); ++m) {
    const auto block = ops::narrow(fuse.weight, 1, static_cast<Index>(m) * channels_, channels_);
    parts.push_back(ops::pointwise(features[m], block, std::optional<BasicTensor<T>>{}));
  }
  auto fused = ops::add_n(parts);
  if (!fuse.bias) return fused;
  // Broadcast the bias over the grid as a 1×1 map of a constant-one plane.
  const auto ones = BasicTensor<T>::full({1, reference[1], reference[2]}, T(1));
  return ops::add(fused, ops::pointwise(ones, ops::reshape(*fuse.bias, {channels_, 1}), std::optional<BasicTensor<T>>{}));
}

template <typename T>
BasicTensor<T> FusionBlock<T>::multi_scale_mix(const BasicTensor<T>& fused) const {
  if (!proj_in) throw ConfigError("multi_scale_mix: block was built linear-only");
  const auto refined = proj_in->map(fused);
  auto total = refined;
  for (const auto& conv : convs) total = ops::add(total, conv(refined));
  return proj_out->map(total);
}

template <typename T>
BasicTensor<T> FusionBlock<T>::se_channel_attention(const BasicTensor<T>& fused) const {
  if (!se) throw ConfigError("se_channel_attention: block was built without channel attention");
  return (*se)(fused);
}

template <typename T>
BasicTensor<T> FusionBlock<T>::operator()(const std::vector<BasicTensor<T>>& features) const {
  const auto fused = linear_fuse(features);
  if (cfg_.linear_only) return fused;
  const auto main = multi_scale_mix(fused);
  if (!se) return main;
  return ops::add(se_channel_attention(fused), main);
}

template class SeBlock<float>;
template class SeBlock<double>;
template class FusionBlock<float>;
template class FusionBlock<double>;

}  // namespace mms
