// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "mmsformer/tensor.hpp"

// Differentiable kernels. Every op checks extents, records a backward closure
// when any input requires a gradient, and sums in a fixed left-to-right order
// so that forward passes are bit-reproducible.
namespace mms::ops {

// Elementwise.
template <typename T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> scale(const BasicTensor<T>& x, T factor);
template <typename T> BasicTensor<T> add_scalar(const BasicTensor<T>& x, T offset);
template <typename T> BasicTensor<T> relu(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> sigmoid(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> square(const BasicTensor<T>& x);

/// x·Φ(x) with the exact erf form of the normal CDF.
template <typename T> BasicTensor<T> gelu(const BasicTensor<T>& x);

/// Elementwise sum of same-shaped tensors. Each element's terms are added in
/// ascending value order, so the result is bit-identical under any
/// permutation of `xs`.
template <typename T> BasicTensor<T> add_n(const std::vector<BasicTensor<T>>& xs);

// Reductions (result shape {1}).
template <typename T> BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> mean(const BasicTensor<T>& x);

// Layout.
template <typename T> BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);
/// Rank-2 transpose.
template <typename T> BasicTensor<T> transpose(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& xs, Index axis);
/// Contiguous sub-range [start, start+length) along one axis.
template <typename T>
BasicTensor<T> narrow(const BasicTensor<T>& x, Index axis, Index start, Index length);

/// [C,H,W] feature map -> [H·W, C] token matrix.
template <typename T> BasicTensor<T> map_to_tokens(const BasicTensor<T>& x);
/// [H·W, C] token matrix -> [C,H,W] feature map.
template <typename T>
BasicTensor<T> tokens_to_map(const BasicTensor<T>& x, Index height, Index width);

// Linear algebra.
template <typename T> BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Token linear map: x[N,in] · weightᵀ + bias, weight stored [out,in].
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const std::optional<BasicTensor<T>>& bias);

/// Per-pixel channel map on x[Cin,H,W] with weight [Cout,Cin]; a 1×1 conv.
template <typename T>
BasicTensor<T> pointwise(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                         const std::optional<BasicTensor<T>>& bias);

struct ConvGeometry {
  Index stride = 1;
  Index pad = 0;
  Index groups = 1;
};

/// Output extent of a convolution along one axis, floor convention.
Index conv_output_extent(Index input, Index kernel, Index stride, Index pad);

/// Cross-correlation of x[Cin,H,W] with weight[Cout,Cin/g,k,k].
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const std::optional<BasicTensor<T>>& bias, ConvGeometry geometry);

// Normalization and attention pieces.
template <typename T> BasicTensor<T> softmax(const BasicTensor<T>& x, Index axis);

/// Normalizes over the last axis (extent C) then applies gamma/beta.
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, T eps);

// Spatial.
/// Half-pixel-center bilinear interpolation with edge clamping. Upscaling only.
template <typename T>
BasicTensor<T> bilinear_upsample(const BasicTensor<T>& x, Index out_height, Index out_width);

/// [C,H,W] -> [C] mean over the spatial axes.
template <typename T> BasicTensor<T> global_avg_pool(const BasicTensor<T>& x);

/// x[C,H,W] scaled per channel by gate[C].
template <typename T>
BasicTensor<T> scale_channels(const BasicTensor<T>& x, const BasicTensor<T>& gate);

}  // namespace mms::ops
