// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "mmsformer/fusion.hpp"
#include "mmsformer/grad_check.hpp"
#include "mmsformer/grad_suite.hpp"
#include "oracles.hpp"

namespace mms {
namespace {

template <typename T>
BasicTensor<T> leaf(Rng& rng, Shape shape) {
  return oracle::tensor<T>(oracle::random_vec(rng, static_cast<std::size_t>(numel(shape))), shape, true);
}

TEST(GradCheck, QuadraticAtSpecStep) {
  Rng rng(1);
  const auto x = leaf<double>(rng, {3, 4});
  const double err = grad_check<double>([](const Tensor64& v) { return ops::sum(ops::square(v)); }, x, 1e-3);
  EXPECT_LE(err, 1e-4);
}

TEST(GradCheck, SumOfMatmul) {
  Rng rng(2);
  const auto x = leaf<float>(rng, {3, 5});
  const auto b = leaf<float>(rng, {5, 2}).detach();
  EXPECT_LE(grad_check<float>([&](const Tensor& v) { return ops::sum(ops::matmul(v, b)); }, x, 1e-2f), 1e-3);
}

TEST(GradCheck, NonScalarOutputIsAContractError) {
  const auto x = Tensor64::from({2}, {1, 2}, true);
  EXPECT_THROW(grad_check<double>([](const Tensor64& v) { return ops::square(v); }, x, 1e-6), ContractError);
}

template <typename T>
double fusion_block_error(T h) {
  Rng init(3);
  ParameterSet<T> params;
  FusionBlock<T> block(ParamScope<T>(params, init), 4, 2, FusionConfig{.se_reduction = 2});
  Rng rng(4);
  auto a = leaf<T>(rng, {4, 5, 5});
  auto b = leaf<T>(rng, {4, 5, 5});
  auto leaves = params.tensors();
  leaves.push_back(a);
  leaves.push_back(b);
  return grad_check_leaves<T>([&] { return ops::sum(block({a, b})); }, leaves, h).max_rel_error;
}

TEST(GradCheck, FusionBlockInBothPrecisions) {
  EXPECT_LE(fusion_block_error<float>(1e-2f), 1e-2);
  EXPECT_LE(fusion_block_error<double>(1e-6), 1e-5);
}

// Every differentiable op on randomized small shapes, 20 seeds, 64-bit.
TEST(GradCheck, OpsOverTwentySeeds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    const Index m = 1 + static_cast<Index>(rng.below(3));
    const Index n = 2 + static_cast<Index>(rng.below(3));
    const Index k = 1 + static_cast<Index>(rng.below(3));
    auto a = leaf<double>(rng, {m, n});
    auto b = leaf<double>(rng, {m, n});
    auto w = leaf<double>(rng, {n, k});
    auto g = leaf<double>(rng, {n});
    auto be = leaf<double>(rng, {n});
    auto img = leaf<double>(rng, {2, 3 + m, 3 + k});
    auto kern = leaf<double>(rng, {4, 1, 3, 3});
    auto bias = leaf<double>(rng, {4});
    auto weights = leaf<double>(rng, {m, n});
    const auto check = [&](const char* name, const std::function<Tensor64()>& f, std::vector<Tensor64> leaves) {
      const double err = grad_check_leaves<double>(f, std::move(leaves), 1e-6).max_rel_error;
      EXPECT_LE(err, 1e-5) << name << " seed " << seed;
    };
    // Weighted sums so that no op sees a constant upstream gradient.
    const auto wsum = [&](const Tensor64& t) {
      return ops::sum(ops::mul(t, weights));
    };
    check("mul/add/sub", [&] { return wsum(ops::sub(ops::mul(a, b), ops::add(a, b))); }, {a, b});
    check("sigmoid/relu/gelu", [&] { return wsum(ops::add(ops::sigmoid(a), ops::gelu(ops::relu(b)))); }, {a, b});
    check("matmul", [&] { return ops::sum(ops::square(ops::matmul(a, w))); }, {a, w});
    check("softmax", [&] { return wsum(ops::softmax(a, 1)); }, {a});
    check("layer_norm", [&] { return wsum(ops::layer_norm(a, g, be, 1e-6)); }, {a, g, be});
    check("conv2d", [&] { return ops::sum(ops::square(ops::conv2d(img, kern, std::optional<BasicTensor<double>>(bias), ops::ConvGeometry{1, 1, 2}))); },
          {img, kern, bias});
    check("bilinear_upsample",
          [&] { return ops::sum(ops::square(ops::bilinear_upsample(img, 2 * (3 + m) + 1, 3 * (3 + k)))); }, {img});
    check("pool/scale",
          [&] { return ops::sum(ops::square(ops::scale_channels(img, ops::global_avg_pool(img)))); }, {img});
  }
}

TEST(GradSuite, EveryEntryPasses) {
  const auto entries = run_gradient_suite(0);
  EXPECT_GE(entries.size(), 30u);
  for (const auto& e : entries) {
    EXPECT_LE(e.error32, kGradTolerance32) << e.name;
    EXPECT_LE(e.error64, kGradTolerance64) << e.name;
  }
}

}  // namespace
}  // namespace mms
