// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>

#include "mmsformer/model.hpp"
#include "oracles.hpp"

namespace mms {
namespace {

using oracle::Vec;

ModelConfig desk(Index m, Variant v = Variant::full, std::uint64_t seed = 0) {
  ModelConfig cfg = ModelConfig::desk();
  cfg.num_modalities = m;
  cfg.variant = v;
  cfg.seed = seed;
  return cfg;
}

std::vector<Tensor> images(Rng& rng, Index m, Index h, Index w) {
  std::vector<Tensor> out;
  for (Index i = 0; i < m; ++i) {
    out.push_back(oracle::tensor<float>(oracle::random_vec(rng, static_cast<std::size_t>(3 * h * w)), {3, h, w}));
  }
  return out;
}

Index count_prefix(const ParameterSet<float>& params, const std::string& prefix, const std::string& contains = "") {
  Index n = 0;
  for (const auto& p : params.items()) {
    if (p.name.rfind(prefix, 0) == 0 && p.name.find(contains) != std::string::npos) n += p.tensor.numel();
  }
  return n;
}

TEST(Model, ForwardShapeAndArity) {
  ModelConfig cfg = desk(1);
  cfg.decoder.num_classes = 5;
  const MmsFormer<float> model(cfg);
  Rng rng(1);
  EXPECT_EQ(model.forward(images(rng, 1, 64, 64)).shape(), (Shape{5, 64, 64}));
  EXPECT_EQ(model.forward_quarter(images(rng, 1, 64, 96)).shape(), (Shape{5, 16, 24}));
  EXPECT_THROW(model.forward(images(rng, 2, 64, 64)), ArityError);
  const MmsFormer<float> two(desk(2));
  auto bad = images(rng, 2, 64, 64);
  bad[1] = Tensor::zeros({3, 32, 64});
  EXPECT_THROW(two.forward(bad), ShapeError);
  EXPECT_THROW(model.forward(images(rng, 1, 48, 64)), ConfigError);
}

TEST(Model, SameSeedSameLogits) {
  Rng rng(2);
  const auto x = images(rng, 2, 64, 64);
  const MmsFormer<float> a(desk(2, Variant::full, 9)), b(desk(2, Variant::full, 9));
  EXPECT_EQ(oracle::to_vec(a.forward(x)), oracle::to_vec(b.forward(x)));
  const MmsFormer<float> c(desk(2, Variant::full, 10));
  EXPECT_NE(oracle::to_vec(a.forward(x)), oracle::to_vec(c.forward(x)));
}

TEST(Model, FourCopiesWithAveragedBlocksEqualSingleModality) {
  const MmsFormer<float> one(desk(1, Variant::full, 3));
  MmsFormer<float> four(desk(4, Variant::full, 4));
  for (const auto& p : four.parameters().items()) {
    std::string source = p.name;
    if (source.rfind("encoder.", 0) == 0) source = "encoder.0" + source.substr(source.find('.', 8));
    const auto* from = one.parameters().find(source);
    ASSERT_NE(from, nullptr) << p.name;
    auto dst = BasicTensor<float>(p.tensor).mutable_data();
    const auto src = from->data();
    if (p.name.find("linear_fuse.weight") != std::string::npos) {
      const Index c = from->dim(0);
      for (Index o = 0; o < c; ++o)
        for (Index m = 0; m < 4; ++m)
          for (Index i = 0; i < c; ++i) dst[static_cast<std::size_t>(o * 4 * c + m * c + i)] = src[o * c + i] / 4;
    } else {
      ASSERT_EQ(dst.size(), src.size()) << p.name;
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  Rng rng(5);
  const auto x = images(rng, 1, 64, 64);
  const Vec ref = oracle::to_vec(one.forward(x));
  const Vec got = oracle::to_vec(four.forward({x[0], x[0], x[0], x[0]}));
  EXPECT_LE(oracle::max_rel_error(got, ref), 1e-5);
}

TEST(Model, ParameterNamesUniqueAndOrderDeterministic) {
  const MmsFormer<float> a(desk(3)), b(desk(3));
  std::set<std::string> names;
  ASSERT_EQ(a.parameters().size(), b.parameters().size());
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    EXPECT_EQ(a.parameters().items()[i].name, b.parameters().items()[i].name);
    EXPECT_TRUE(names.insert(a.parameters().items()[i].name).second);
  }
  EXPECT_NE(names.count("encoder.0.stage2.block1.attn.wq.weight"), 0u);
  EXPECT_EQ(a.parameters().items().front().name.rfind("encoder.0.", 0), 0u);
  EXPECT_EQ(a.parameters().items().back().name.rfind("decoder.", 0), 0u);
}

TEST(Model, LinearOnlyHasNoConvOrSeParameters) {
  const MmsFormer<float> model(desk(2, Variant::linear_only));
  for (const auto& p : model.parameters().items()) {
    if (p.name.rfind("fusion.", 0) != 0) continue;
    EXPECT_NE(p.name.find("linear_fuse"), std::string::npos) << p.name;
  }
}

TEST(Model, KernelVariantStructure) {
  const MmsFormer<float> model(desk(2, Variant::kernels_3_7_11));
  for (const auto& block : model.fusion) {
    std::vector<Index> ks;
    for (const auto& c : block.convs) ks.push_back(c.kernel());
    EXPECT_EQ(ks, (std::vector<Index>{3, 7, 11}));
  }
  EXPECT_NE(model.summary().find("kernels [3,7,11]"), std::string::npos) << model.summary();
  const MmsFormer<float> full(desk(2));
  EXPECT_NE(full.summary().find("kernels [3,5,7]"), std::string::npos);
}

TEST(Model, VariantLattice) {
  const MmsFormer<float> none(desk(2, Variant::no_channel_attention));
  const MmsFormer<float> noconv(desk(2, Variant::no_parallel_convs));
  const MmsFormer<float> lin(desk(2, Variant::linear_only));
  for (std::size_t i = 0; i < kNumStages; ++i) {
    EXPECT_FALSE(none.fusion[i].se.has_value());
    EXPECT_EQ(none.fusion[i].convs.size(), 3u);
    EXPECT_TRUE(noconv.fusion[i].se.has_value());
    EXPECT_TRUE(noconv.fusion[i].convs.empty());
    EXPECT_FALSE(lin.fusion[i].proj_in.has_value());
  }
  // Dropping both the SE gate and the convs leaves linear_only plus the two projections.
  ModelConfig both = desk(2);
  both.fusion.enable_channel_attention = false;
  both.fusion.enable_parallel_convs = false;
  const MmsFormer<float> composed(both);
  std::set<std::string> a, b;
  for (const auto& p : composed.parameters().items())
    if (p.name.rfind("fusion.", 0) == 0) a.insert(p.name);
  for (const auto& p : lin.parameters().items())
    if (p.name.rfind("fusion.", 0) == 0) b.insert(p.name);
  for (const auto& n : b) EXPECT_EQ(a.count(n), 1u) << n;
  EXPECT_EQ(a.size(), b.size() + 4 * 4);  // proj_in/proj_out weight and bias per stage
  for (const auto& n : a) {
    if (b.count(n)) continue;
    EXPECT_TRUE(n.find("proj_in") != std::string::npos || n.find("proj_out") != std::string::npos) << n;
  }
}

TEST(Model, AddingAModalityGrowsOnlyEncodersAndLinearFusion) {
  const MmsFormer<float> one(desk(1)), two(desk(2)), three(desk(3));
  EXPECT_EQ(count_prefix(two.parameters(), "encoder."), 2 * count_prefix(one.parameters(), "encoder."));
  EXPECT_EQ(count_prefix(two.parameters(), "decoder."), count_prefix(one.parameters(), "decoder."));
  for (const char* part : {".conv", ".se.", ".proj_"}) {
    EXPECT_EQ(count_prefix(three.parameters(), "fusion.", part), count_prefix(one.parameters(), "fusion.", part));
  }
  const Index f1 = count_prefix(one.parameters(), "fusion.", "linear_fuse");
  const Index f2 = count_prefix(two.parameters(), "fusion.", "linear_fuse");
  const Index f3 = count_prefix(three.parameters(), "fusion.", "linear_fuse");
  EXPECT_EQ(f3 - f2, f2 - f1);
  EXPECT_EQ(f2 - f1, 8 * 8 + 16 * 16 + 32 * 32 + 64 * 64);
}

TEST(Model, EncodersShareNoParameters) {
  MmsFormer<float> model(desk(2));
  Rng rng(6);
  const auto x = images(rng, 2, 64, 64);
  const auto before = model.encode(x);
  for (const auto& p : model.parameters().items()) {
    if (p.name.rfind("encoder.1.", 0) != 0) continue;
    for (auto& v : BasicTensor<float>(p.tensor).mutable_data()) v += 0.25f;
  }
  const auto after = model.encode(x);
  for (std::size_t i = 0; i < kNumStages; ++i) {
    EXPECT_EQ(oracle::to_vec(after[0][i]), oracle::to_vec(before[0][i]));
    EXPECT_NE(oracle::to_vec(after[1][i]), oracle::to_vec(before[1][i]));
  }
}

TEST(Model, InvalidConfigsRejected) {
  ModelConfig cfg = desk(0);
  EXPECT_THROW(MmsFormer<float>{cfg}, ConfigError);
  cfg = desk(2);
  cfg.fusion.kernel_sizes = {3, 6};
  EXPECT_THROW(MmsFormer<float>{cfg}, ConfigError);
  cfg = desk(2);
  cfg.encoder.stages[1].heads = 3;
  EXPECT_THROW(MmsFormer<float>{cfg}, ConfigError);
}

}  // namespace
}  // namespace mms
