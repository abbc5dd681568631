// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "mmsformer/fusion.hpp"
#include "mmsformer/grad_check.hpp"
#include "oracles.hpp"

namespace mms {
namespace {

using oracle::Vec;

template <typename T>
void set(BasicTensor<T> t, const Vec& v) {
  ASSERT_EQ(static_cast<std::size_t>(t.numel()), v.size());
  std::copy(v.begin(), v.end(), t.mutable_data().begin());
}

template <typename T>
void set_identity(const Linear<T>& l) {
  const Index n = l.out_features();
  Vec eye(static_cast<std::size_t>(n * n), 0.0);
  for (Index i = 0; i < n; ++i) eye[static_cast<std::size_t>(i * n + i)] = 1.0;
  set(l.weight, eye);
}

template <typename T>
void zero(BasicTensor<T> t) {
  std::fill(t.mutable_data().begin(), t.mutable_data().end(), T(0));
}

template <typename T>
void randomize(const ParameterSet<T>& params, Rng& rng, double scale = 0.5) {
  for (const auto& p : params.items()) {
    auto t = p.tensor;
    for (auto& x : t.mutable_data()) x = static_cast<T>(scale * rng.uniform(-1.0, 1.0));
  }
}

template <typename T>
struct Block {
  ParameterSet<T> params;
  FusionBlock<T> block;
  Block(Index c, Index m, FusionConfig cfg, std::uint64_t seed) {
    Rng rng(seed);
    block = FusionBlock<T>(ParamScope<T>(params, rng, "f"), c, m, cfg);
  }
  Vec w(const std::string& name) const { return oracle::to_vec(*params.find("f." + name)); }
};

template <typename T>
std::vector<BasicTensor<T>> random_features(Rng& rng, Index m, Shape shape, bool grad = false) {
  std::vector<BasicTensor<T>> out;
  for (Index i = 0; i < m; ++i) {
    out.push_back(oracle::tensor<T>(oracle::random_vec(rng, static_cast<std::size_t>(numel(shape))), shape, grad));
  }
  return out;
}

FusionConfig small_se() {
  FusionConfig cfg;
  cfg.se_reduction = 2;
  return cfg;
}

FusionConfig linear_only() {
  FusionConfig cfg;
  cfg.linear_only = true;
  return cfg;
}

TEST(LinearFuse, SingleModalityIdentity) {
  Block<float> b(4, 1, FusionConfig{}, 1);
  set_identity(b.block.fuse);
  Rng rng(2);
  const auto f = random_features<float>(rng, 1, {4, 3, 5});
  EXPECT_EQ(oracle::to_vec(b.block.linear_fuse(f)), oracle::to_vec(f[0]));
}

TEST(LinearFuse, ProjectionOntoFirstModality) {
  Block<float> b(4, 2, FusionConfig{}, 3);
  Vec w(4 * 8, 0.0);
  for (int i = 0; i < 4; ++i) w[i * 8 + i] = 1.0;
  set(b.block.fuse.weight, w);
  Rng rng(4);
  const auto f = random_features<float>(rng, 2, {4, 3, 3});
  EXPECT_EQ(oracle::to_vec(b.block.linear_fuse(f)), oracle::to_vec(f[0]));
}

TEST(LinearFuse, ThreeModalitiesMatchConcatMatmul) {
  Block<float> b(4, 3, FusionConfig{}, 5);
  Rng rng(6);
  randomize(b.params, rng);
  const auto f = random_features<float>(rng, 3, {4, 2, 3});
  Vec stacked;
  for (const auto& x : f) {
    const Vec v = oracle::to_vec(x);
    stacked.insert(stacked.end(), v.begin(), v.end());
  }
  // [12, 6] channel-major stack: treat pixels as columns.
  const Vec prod = oracle::matmul(b.w("linear_fuse.weight"), stacked, 4, 12, 6);
  Vec ref(prod);
  const Vec bias = b.w("linear_fuse.bias");
  for (int c = 0; c < 4; ++c)
    for (int p = 0; p < 6; ++p) ref[c * 6 + p] += bias[c];
  EXPECT_LE(oracle::max_rel_error(oracle::to_vec(b.block.linear_fuse(f)), ref), 1e-5);
}

TEST(LinearFuse, HeterogeneousShapesNameTheModality) {
  Block<float> b(4, 3, FusionConfig{}, 7);
  try {
    b.block.linear_fuse({Tensor::zeros({4, 2, 2}), Tensor::zeros({4, 2, 2}), Tensor::zeros({4, 3, 2})});
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("modality 2"), std::string::npos) << e.what();
  }
}

TEST(MultiScaleMix, ZeroConvsAndIdentityProjectionsPassThrough) {
  Block<float> b(4, 1, FusionConfig{}, 8);
  set_identity(*b.block.proj_in);
  set_identity(*b.block.proj_out);
  ASSERT_EQ(b.block.convs.size(), 3u);
  for (const auto& c : b.block.convs) zero(c.weight);
  Rng rng(9);
  const auto f = random_features<float>(rng, 1, {4, 5, 5});
  EXPECT_EQ(oracle::to_vec(b.block.multi_scale_mix(f[0])), oracle::to_vec(f[0]));
}

TEST(MultiScaleMix, DepthwiseMatchesCompositionOracle) {
  Block<double> b(4, 1, FusionConfig{}, 10);
  Rng rng(11);
  randomize(b.params, rng);
  const Vec x = oracle::random_vec(rng, 4 * 5 * 5);
  const auto y = b.block.multi_scale_mix(oracle::tensor<double>(x, {4, 5, 5}));
  const auto to_pc = [](const Vec& m) {
    Vec t(m.size());
    for (int c = 0; c < 4; ++c)
      for (int p = 0; p < 25; ++p) t[p * 4 + c] = m[c * 25 + p];
    return t;
  };
  const auto to_cp = [](const Vec& m) {
    Vec t(m.size());
    for (int c = 0; c < 4; ++c)
      for (int p = 0; p < 25; ++p) t[c * 25 + p] = m[p * 4 + c];
    return t;
  };
  const Vec refined = to_cp(oracle::linear(to_pc(x), 25, 4, b.w("proj_in.weight"), 4, b.w("proj_in.bias")));
  Vec total = refined;
  for (const int k : {3, 5, 7}) {
    const std::string n = "conv" + std::to_string(k);
    const Vec c = oracle::conv2d(refined, 4, 5, 5, b.w(n + ".weight"), 4, k, b.w(n + ".bias"), 1, (k - 1) / 2, 4);
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += c[i];
  }
  const Vec out = to_cp(oracle::linear(to_pc(total), 25, 4, b.w("proj_out.weight"), 4, b.w("proj_out.bias")));
  EXPECT_LE(oracle::max_rel_error(oracle::to_vec(y), out), 1e-5);
}

TEST(MultiScaleMix, EvenKernelIsAConfigError) {
  FusionConfig cfg;
  cfg.kernel_sizes = {3, 4};
  EXPECT_THROW(Block<float>(4, 1, cfg, 0), ConfigError);
}

TEST(SeChannelAttention, ZeroSecondLayerGivesHalfGate) {
  Block<float> b(8, 1, small_se(), 12);
  Rng rng(13);
  randomize(b.params, rng);
  zero(b.block.se->fc2.weight);
  zero(*b.block.se->fc2.bias);
  const auto f = random_features<float>(rng, 1, {8, 3, 3});
  for (const Tensor out = b.block.se->gate(f[0]); const float g : out.data()) EXPECT_EQ(g, 0.5f);
  const Vec x = oracle::to_vec(f[0]);
  const Vec y = oracle::to_vec(b.block.se_channel_attention(f[0]));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], static_cast<float>(x[i]) / 2);
}

TEST(SeChannelAttention, ZeroInputGivesZero) {
  Block<float> b(8, 1, small_se(), 14);
  Rng rng(15);
  randomize(b.params, rng, 3.0);
  for (const Tensor out = b.block.se_channel_attention(Tensor::zeros({8, 4, 4})); const float v : out.data()) EXPECT_EQ(v, 0.0f);
}

TEST(SeChannelAttention, MatchesPoolMatmulSigmoidOracle) {
  Block<double> b(8, 1, small_se(), 16);
  Rng rng(17);
  randomize(b.params, rng);
  const Vec x = oracle::random_vec(rng, 8 * 3 * 4);
  const auto y = b.block.se_channel_attention(oracle::tensor<double>(x, {8, 3, 4}));
  Vec pooled(8, 0.0);
  for (int c = 0; c < 8; ++c) {
    for (int p = 0; p < 12; ++p) pooled[c] += x[c * 12 + p];
    pooled[c] /= 12;
  }
  Vec hidden = oracle::linear(pooled, 1, 8, b.w("se.fc1.weight"), 4, b.w("se.fc1.bias"));
  for (auto& h : hidden) h = std::max(h, 0.0);
  const Vec logits = oracle::linear(hidden, 1, 4, b.w("se.fc2.weight"), 8, b.w("se.fc2.bias"));
  Vec ref(x.size());
  for (int c = 0; c < 8; ++c)
    for (int p = 0; p < 12; ++p) ref[c * 12 + p] = x[c * 12 + p] * oracle::sigmoid(logits[c]);
  EXPECT_LE(oracle::max_rel_error(oracle::to_vec(y), ref), 1e-6);
}

TEST(Fuse, LinearOnlyIdentityIsIdentity) {
  Block<float> b(4, 1, linear_only(), 18);
  EXPECT_FALSE(b.block.proj_in.has_value());
  EXPECT_TRUE(b.block.convs.empty());
  EXPECT_FALSE(b.block.se.has_value());
  set_identity(b.block.fuse);
  Rng rng(19);
  const auto f = random_features<float>(rng, 1, {4, 4, 4});
  EXPECT_EQ(oracle::to_vec(b.block(f)), oracle::to_vec(f[0]));
}

TEST(Fuse, ZeroModelGivesZero) {
  Block<float> b(8, 2, small_se(), 20);
  for (const auto& p : b.params.items()) zero(p.tensor);
  Rng rng(21);
  for (const Tensor out = b.block(random_features<float>(rng, 2, {8, 4, 4})); const float v : out.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Fuse, ShapePreservedForEveryModalityCount) {
  for (Index m = 1; m <= 4; ++m) {
    for (const Variant v : kAllVariants) {
      ModelConfig cfg = ModelConfig::desk();
      cfg.variant = v;
      cfg.fusion.se_reduction = 4;
      Block<float> b(8, m, cfg.resolved_fusion(), 22);
      Rng rng(23);
      EXPECT_EQ(b.block(random_features<float>(rng, m, {8, 3, 5})).shape(), (Shape{8, 3, 5}));
    }
  }
}

TEST(Fuse, ModalityPermutationEquivarianceIsBitExact) {
  for (Index m = 2; m <= 4; ++m) {
    Block<float> b(8, m, small_se(), 24 + static_cast<std::uint64_t>(m));
    Rng rng(30);
    randomize(b.params, rng);
    const auto f = random_features<float>(rng, m, {8, 4, 4});
    const Vec reference = oracle::to_vec(b.block(f));
    const Vec original = b.w("linear_fuse.weight");
    std::vector<Index> perm(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i) perm[static_cast<std::size_t>(i)] = i;
    int checked = 0;
    while (std::next_permutation(perm.begin(), perm.end())) {
      Vec w(original.size());
      std::vector<Tensor> permuted;
      for (Index j = 0; j < m; ++j) {
        const Index src = perm[static_cast<std::size_t>(j)];
        permuted.push_back(f[static_cast<std::size_t>(src)]);
        for (Index o = 0; o < 8; ++o)
          for (Index i = 0; i < 8; ++i) w[o * 8 * m + j * 8 + i] = original[o * 8 * m + src * 8 + i];
      }
      set(b.block.fuse.weight, w);
      EXPECT_EQ(oracle::to_vec(b.block(permuted)), reference) << "M=" << m;
      ++checked;
    }
    set(b.block.fuse.weight, original);
    EXPECT_GT(checked, 0);
  }
}

TEST(Fuse, GatesStrictlyInsideUnitInterval) {
  Rng rng(40);
  for (int trial = 0; trial < 20; ++trial) {
    Block<float> b(16, 2, FusionConfig{}, 41 + static_cast<std::uint64_t>(trial));
    randomize(b.params, rng, 1.0);
    const auto f = random_features<float>(rng, 2, {16, 4, 4});
    for (const Tensor out = b.block.se->gate(b.block.linear_fuse(f)); const float g : out.data()) {
      EXPECT_GT(g, 0.0f);
      EXPECT_LT(g, 1.0f);
    }
  }
}

TEST(Fuse, AblationWiringRelation) {
  Block<float> full(8, 2, small_se(), 50);
  Rng rng(51);
  randomize(full.params, rng);
  for (const auto& c : full.block.convs) {
    zero(c.weight);
    zero(*c.bias);
  }
  zero(full.block.se->fc2.weight);
  zero(*full.block.se->fc2.bias);
  const auto f = random_features<float>(rng, 2, {8, 4, 4});
  const auto fused = full.block.linear_fuse(f);
  const Vec expected_main = oracle::to_vec(full.block.proj_out->map(full.block.proj_in->map(fused)));
  const Vec half = oracle::to_vec(ops::scale(fused, 0.5f));
  const Vec y = oracle::to_vec(full.block(f));
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], expected_main[i] + half[i], 1e-6);
}

TEST(Fuse, EveryModalityReceivesGradient) {
  Block<float> b(8, 3, small_se(), 60);
  Rng rng(61);
  randomize(b.params, rng);
  auto f = random_features<float>(rng, 3, {8, 4, 4}, true);
  ops::sum(ops::square(b.block(f))).backward();
  for (const auto& x : f) {
    double norm = 0;
    for (const float g : x.grad()) norm += static_cast<double>(g) * g;
    EXPECT_GT(norm, 0.0);
  }
}

TEST(Fuse, SumGradientWrtModalitiesPassesCheck) {
  Block<float> b(8, 2, small_se(), 70);
  Rng rng(71);
  randomize(b.params, rng);
  const auto f = random_features<float>(rng, 2, {8, 4, 4}, true);
  const auto report = grad_check_leaves<float>([&] { return ops::sum(b.block(f)); }, f, 1e-2f);
  EXPECT_LE(report.max_rel_error, 1e-2);
}

}  // namespace
}  // namespace mms
