// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "mmsformer/config.hpp"
#include "mmsformer/dataset.hpp"
#include "mmsformer/rng.hpp"
#include "mmsformer/training.hpp"

namespace mms {
namespace {

TEST(KeyValues, ParseCommentsAndLastWins) {
  const auto kv = KeyValues::parse("# header\na.b = 1\n\nc = x y  # trailing\na.b=2\n");
  EXPECT_EQ(kv.get("a.b"), "2");
  EXPECT_EQ(kv.get("c"), "x y");
  EXPECT_EQ(kv.entries().front().first, "a.b");
  EXPECT_FALSE(kv.get("missing").has_value());
  EXPECT_THROW(KeyValues::parse("novalue\n"), ConfigError);
}

TEST(KeyValues, OverridesApplyInOrder) {
  auto kv = KeyValues::parse("model.variant = full\n");
  kv.apply_override("model.variant=linear_only");
  kv.apply_override("train.seed=3");
  EXPECT_EQ(kv.get("model.variant"), "linear_only");
  EXPECT_EQ(kv.get("train.seed"), "3");
  EXPECT_THROW(kv.apply_override("noequals"), ConfigError);
  EXPECT_EQ(KeyValues::parse(kv.serialize()).entries(), kv.entries());
}

TEST(KeyValues, ScalarParsers) {
  EXPECT_EQ(parse_int("k", "42"), 42);
  EXPECT_THROW(parse_int("k", "4x"), ConfigError);
  EXPECT_TRUE(parse_bool("k", "true"));
  EXPECT_THROW(parse_bool("k", "maybe"), ConfigError);
  EXPECT_EQ(parse_int_list("k", "3, 5,7"), (std::vector<std::int64_t>{3, 5, 7}));
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-12, 12));
    EXPECT_EQ(parse_real("k", format_real(v)), v);
  }
}

TEST(ModelConfig, PresetsValidateAndMatchDocumentedValues) {
  const auto desk = ModelConfig::desk();
  EXPECT_NO_THROW(desk.validate());
  EXPECT_EQ(desk.encoder.stages[0].channels, 8);
  EXPECT_EQ(desk.encoder.stages[3].channels, 64);
  EXPECT_EQ(desk.decoder.embed_dim, 32);
  EXPECT_EQ(desk.input_multiple(), 32);
  const auto full = ModelConfig::full_scale();
  EXPECT_NO_THROW(full.validate());
  const Index channels[] = {64, 128, 320, 512}, depths[] = {3, 4, 6, 3};
  for (std::size_t i = 0; i < kNumStages; ++i) {
    EXPECT_EQ(full.encoder.stages[i].channels, channels[i]);
    EXPECT_EQ(full.encoder.stages[i].depth, depths[i]);
    EXPECT_EQ(desk.encoder.stage_stride(i), Index{4} << i);
  }
  EXPECT_EQ(full.decoder.embed_dim, 768);
  EXPECT_EQ(desk.fusion.kernel_sizes, (std::vector<Index>{3, 5, 7}));
  EXPECT_EQ(desk.fusion.se_reduction, 16);
  EXPECT_EQ(desk.fusion.se_hidden(8), 1);
  EXPECT_EQ(desk.fusion.se_hidden(320), 20);
}

TEST(ModelConfig, VariantsRewriteFlags) {
  ModelConfig c = ModelConfig::desk();
  for (const Variant v : kAllVariants) {
    c.variant = v;
    EXPECT_EQ(parse_variant(to_string(v)), v);
    const auto f = c.resolved_fusion();
    EXPECT_EQ(f.enable_channel_attention, v != Variant::no_channel_attention);
    EXPECT_EQ(f.enable_parallel_convs, v != Variant::no_parallel_convs);
    EXPECT_EQ(f.linear_only, v == Variant::linear_only);
    EXPECT_EQ(f.kernel_sizes, v == Variant::kernels_3_7_11 ? (std::vector<Index>{3, 7, 11}) : c.fusion.kernel_sizes);
  }
  EXPECT_THROW(parse_variant("bogus"), ConfigError);
}

TEST(ModelConfig, KeyValueRoundTripIsLossless) {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    ModelConfig c = trial % 2 ? ModelConfig::desk() : ModelConfig::full_scale();
    c.num_modalities = 1 + static_cast<Index>(rng.below(4));
    c.variant = kAllVariants[rng.below(kAllVariants.size())];
    c.seed = rng.next_u64() >> 1;
    c.fusion.se_reduction = 1 + static_cast<Index>(rng.below(16));
    c.fusion.conv_grouping = rng.below(2) ? ConvGrouping::dense : ConvGrouping::depthwise;
    c.decoder.num_classes = 2 + static_cast<Index>(rng.below(30));
    c.encoder.stages[2].depth = static_cast<Index>(rng.below(3));
    const auto text = c.to_key_values().serialize();
    EXPECT_EQ(ModelConfig::from_key_values(KeyValues::parse(text)), c) << text;
  }
}

TEST(ModelConfig, UnknownKeysAndBadValuesRejected) {
  EXPECT_THROW(ModelConfig::from_key_values(KeyValues::parse("model.bogus = 1\n")), ConfigError);
  EXPECT_THROW(ModelConfig::from_key_values(KeyValues::parse("encoder.stage5.depth = 1\n")), ConfigError);
  EXPECT_NO_THROW(ModelConfig::from_key_values(KeyValues::parse("train.seed = 1\n")));
  ModelConfig c = ModelConfig::desk();
  c.encoder.stages[0].patch_stride = 2;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig::desk();
  c.encoder.stages[0].reduction_ratio = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig::desk();
  c.decoder.num_classes = 1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TrainConfig, RoundTripAndValidation) {
  TrainConfig t;
  t.base_lr = 6e-5;
  t.adam_betas = {0.8, 0.95};
  t.total_epochs = 7;
  t.warmup_epochs = 2;
  t.seed = 99;
  EXPECT_EQ(TrainConfig::from_key_values(KeyValues::parse(t.to_key_values().serialize())), t);
  t.warmup_epochs = 8;
  EXPECT_THROW(t.validate(), ConfigError);
  t = TrainConfig{};
  t.base_lr = 0;
  EXPECT_THROW(t.validate(), ConfigError);
}

TEST(SyntheticSpec, RoundTripAndValidation) {
  SyntheticSpec s;
  s.mode = SyntheticMode::per_class_modality;
  s.num_classes = 3;
  s.noise_sigma = 0.2;
  s.seed = 5;
  const auto back = SyntheticSpec::from_key_values(KeyValues::parse(s.to_key_values().serialize()));
  EXPECT_EQ(back.to_key_values().serialize(), s.to_key_values().serialize());
  s.extent = 40;
  EXPECT_THROW(s.validate(), ConfigError);
  s = SyntheticSpec{};
  s.num_classes = 3;
  EXPECT_THROW(s.validate(), ConfigError);  // xor is binary
  s = SyntheticSpec{};
  s.num_modalities = 1;
  EXPECT_THROW(s.validate(), ConfigError);
}

}  // namespace
}  // namespace mms
