// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "mmsformer/training.hpp"
#include "oracles.hpp"

namespace mms {
namespace {

using oracle::Vec;

TEST(CrossEntropy, UniformLogitsGiveLogK) {
  LabelMap labels(3, 2);
  for (std::size_t i = 0; i < labels.labels.size(); ++i) labels.labels[i] = static_cast<std::uint8_t>(i % 4);
  EXPECT_NEAR(cross_entropy(Tensor::zeros({4, 3, 2}), labels).item(), std::log(4.0), 1e-6);
  EXPECT_NEAR(std::log(4.0), 1.386294, 1e-6);
}

TEST(CrossEntropy, SaturatesForConfidentCorrectLogits) {
  LabelMap labels(2, 2);
  labels.labels = {0, 1, 2, 1};
  Tensor logits = Tensor::zeros({3, 2, 2});
  for (std::size_t p = 0; p < 4; ++p) logits.mutable_data()[labels.labels[p] * 4 + p] = 100.0f;
  EXPECT_LT(cross_entropy(logits, labels).item(), 1e-6);
}

TEST(CrossEntropy, RandomCaseMatchesPerPixelOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec x = oracle::random_vec(rng, 3 * 2 * 2, 3.0);
    LabelMap labels(2, 2);
    for (auto& l : labels.labels) l = static_cast<std::uint8_t>(rng.below(3));
    double ref = 0;
    for (int p = 0; p < 4; ++p) {
      double z = 0;
      for (int c = 0; c < 3; ++c) z += std::exp(x[c * 4 + p]);
      ref += -(x[labels.labels[p] * 4 + p] - std::log(z));
    }
    ref /= 4;
    EXPECT_NEAR(cross_entropy(oracle::tensor<double>(x, {3, 2, 2}), labels).item(), ref, 1e-6);
    EXPECT_NEAR(cross_entropy(oracle::tensor<float>(x, {3, 2, 2}), labels).item(), ref, 1e-6);
  }
}

TEST(CrossEntropy, IgnoredPixelsGetNoGradient) {
  Rng rng(2);
  const auto logits = oracle::tensor<double>(oracle::random_vec(rng, 4 * 3 * 3), {4, 3, 3}, true);
  LabelMap labels(3, 3);
  for (std::size_t i = 0; i < 9; ++i) labels.labels[i] = i % 3 == 0 ? kIgnoreIndex : static_cast<std::uint8_t>(i % 4);
  const auto loss = cross_entropy(logits, labels);
  // Mean over the 6 labelled pixels only.
  double ref = 0;
  for (std::size_t p = 0; p < 9; ++p) {
    if (labels.labels[p] == kIgnoreIndex) continue;
    double z = 0;
    for (int c = 0; c < 4; ++c) z += std::exp(logits.data()[c * 9 + p]);
    ref -= logits.data()[labels.labels[p] * 9 + p] - std::log(z);
  }
  EXPECT_NEAR(loss.item(), ref / 6, 1e-12);
  loss.backward();
  for (std::size_t p = 0; p < 9; ++p) {
    for (int c = 0; c < 4; ++c) {
      const double g = logits.grad()[c * 9 + p];
      if (labels.labels[p] == kIgnoreIndex) EXPECT_EQ(g, 0.0);
    }
  }
}

TEST(CrossEntropy, AllIgnoredIsZeroWithZeroGradient) {
  const auto logits = Tensor::from({2, 1, 2}, {1, 2, 3, 4}, true);
  const auto loss = cross_entropy(logits, LabelMap(1, 2, kIgnoreIndex));
  EXPECT_EQ(loss.item(), 0.0f);
  loss.backward();
  for (const float g : logits.grad()) EXPECT_EQ(g, 0.0f);
}

TEST(CrossEntropy, OutOfRangeLabelNamesPixel) {
  LabelMap labels(2, 3);
  labels.at(1, 2) = 7;
  try {
    (void)cross_entropy(Tensor::zeros({3, 2, 3}), labels);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("(1, 2)"), std::string::npos) << e.what();
  }
  EXPECT_THROW(cross_entropy(Tensor::zeros({3, 2, 2}), labels), ShapeError);
}

TEST(LrAt, WarmupPolyBoundaryAndMidpoint) {
  TrainConfig cfg;
  cfg.base_lr = 6e-5;
  cfg.total_epochs = 20;
  cfg.warmup_epochs = 10;
  EXPECT_NEAR(lr_at(0, 0.0, cfg), 6e-6, 1e-18);
  EXPECT_NEAR(lr_at(9, 0.9, cfg), 6e-6, 1e-18);
  EXPECT_EQ(lr_at(10, 0.0, cfg), 6e-5);
  EXPECT_NEAR(lr_at(15, 0.0, cfg), 6e-5 * std::pow(0.5, 0.9), 1e-9);
  EXPECT_NEAR(std::pow(0.5, 0.9), 0.53589, 1e-5);
  EXPECT_THROW(lr_at(20, 0.0, cfg), ContractError);
  EXPECT_THROW(lr_at(3, 1.0, cfg), ContractError);
}

TEST(LrAt, NonIncreasingAndContinuousAfterWarmup) {
  TrainConfig cfg;
  cfg.total_epochs = 12;
  cfg.warmup_epochs = 3;
  double prev = lr_at(3, 0.0, cfg);
  for (Index e = 3; e < 12; ++e) {
    for (int k = 0; k < 50; ++k) {
      const double lr = lr_at(e, k / 50.0, cfg);
      EXPECT_LE(lr, prev);
      EXPECT_LT(prev - lr, 2e-4);
      prev = lr;
    }
  }
  // The end of one epoch meets the start of the next.
  EXPECT_NEAR(lr_at(6, 0.0, cfg), lr_at(5, 1.0 - 1e-12, cfg), 1e-12);
}

TEST(AdamW, ZeroGradientZeroDecayIsFixedPoint) {
  std::vector<Tensor64> p{Tensor64::from({3}, {1, -2, 3}, true)};
  OptimizerState<double> st;
  adamw_step(p, st, 0.1, 0.0);
  EXPECT_EQ(oracle::to_vec(p[0]), (Vec{1, -2, 3}));
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  std::vector<Tensor64> p{Tensor64::from({1}, {0.5}, true)};
  p[0].mutable_grad()[0] = 1.0;
  OptimizerState<double> st;
  adamw_step(p, st, 1e-3, 0.0);
  EXPECT_NEAR(p[0].item() - 0.5, -1e-3, 1e-10);
}

TEST(AdamW, ZeroDecayEqualsAdamOnScalarProblem) {
  const double lr = 0.05, eps = 1e-8, b1 = 0.9, b2 = 0.999;
  std::vector<Tensor64> p{Tensor64::from({1}, {2.0}, true)};
  OptimizerState<double> st;
  double w = 2.0, m = 0, v = 0;
  for (int t = 1; t <= 200; ++t) {
    p[0].zero_grad();
    const auto x = p[0];
    ops::sum(ops::square(ops::add_scalar(x, -0.3))).backward();
    adamw_step(p, st, lr, 0.0, eps, {b1, b2});
    const double g = 2 * (w - 0.3);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    w -= lr * mhat / (std::sqrt(vhat) + eps);
    ASSERT_NEAR(p[0].item(), w, 1e-12) << "step " << t;
  }
}

TEST(AdamW, DecayIsDecoupled) {
  std::vector<Tensor64> p{Tensor64::from({1}, {2.0}, true)};
  OptimizerState<double> st;
  adamw_step(p, st, 0.1, 0.5);
  // Zero gradient: only the lr·wd shrink applies.
  EXPECT_NEAR(p[0].item(), 2.0 * (1 - 0.05), 1e-15);
}

TEST(AdamW, DescendsOnQuadratic) {
  std::vector<Tensor64> p{Tensor64::from({4}, {1, -2, 3, 0.5}, true)};
  OptimizerState<double> st;
  double first = 0, last = 0;
  for (int t = 0; t < 300; ++t) {
    p[0].zero_grad();
    const auto loss = ops::sum(ops::square(p[0]));
    if (t == 0) first = loss.item();
    last = loss.item();
    loss.backward();
    adamw_step(p, st, 0.05, 0.01);
  }
  EXPECT_LT(last, 1e-3 * first);
}

Dataset tiny_set(std::uint64_t seed, Index n) {
  SyntheticSpec s;
  s.mode = SyntheticMode::single_modality_sufficient;
  s.num_modalities = 1;
  s.num_classes = 3;
  s.train_samples = n;
  s.noise_sigma = 0.05;
  s.seed = seed;
  return synthesize(s, "train");
}

ModelConfig tiny_model(const Dataset& d) {
  ModelConfig cfg = ModelConfig::desk();
  cfg.num_modalities = d.num_modalities();
  cfg.decoder.num_classes = d.num_classes();
  return cfg;
}

TEST(Train, LossHalvesAndLogMatchesSchedule) {
  const Dataset d = tiny_set(3, 4);
  MmsFormer<float> model(tiny_model(d));
  TrainConfig cfg;
  cfg.total_epochs = 30;
  cfg.warmup_epochs = 3;
  const auto result = train(model, d, Dataset{}, cfg);
  ASSERT_EQ(result.log.size(), 30u * 2u);
  const double first = (result.log[0].loss + result.log[1].loss) / 2;
  const double last = (result.log[58].loss + result.log[59].loss) / 2;
  EXPECT_LE(last, 0.5 * first) << first << " -> " << last;
  for (std::size_t i = 0; i < result.log.size(); ++i) {
    const auto& r = result.log[i];
    EXPECT_EQ(r.lr, lr_at(r.epoch, static_cast<double>(i % 2) / 2.0, cfg));
    EXPECT_EQ(r.iter, static_cast<Index>(i + 1));
  }
}

TEST(Train, SameSeedGivesIdenticalLogs) {
  const Dataset d = tiny_set(4, 4);
  TrainConfig cfg;
  cfg.total_epochs = 4;
  cfg.warmup_epochs = 1;
  cfg.eval_every = 2;
  std::vector<TrainResult> runs;
  for (int i = 0; i < 2; ++i) {
    MmsFormer<float> model(tiny_model(d));
    runs.push_back(train(model, d, d, cfg));
  }
  ASSERT_EQ(runs[0].log.size(), runs[1].log.size());
  for (std::size_t i = 0; i < runs[0].log.size(); ++i) {
    EXPECT_EQ(runs[0].log[i].loss, runs[1].log[i].loss);
    EXPECT_EQ(runs[0].log[i].val_miou, runs[1].log[i].val_miou);
  }
  EXPECT_TRUE(runs[0].log[3].val_miou.has_value());
  EXPECT_FALSE(runs[0].log[2].val_miou.has_value());
}

TEST(Train, ArityAndClassMismatchRejected) {
  const Dataset d = tiny_set(5, 2);
  ModelConfig cfg = tiny_model(d);
  cfg.num_modalities = 2;
  MmsFormer<float> two(cfg);
  EXPECT_THROW(train(two, d, Dataset{}, TrainConfig{}), ArityError);
  cfg = tiny_model(d);
  cfg.decoder.num_classes = 4;
  MmsFormer<float> four(cfg);
  EXPECT_THROW(train(four, d, Dataset{}, TrainConfig{}), ConfigError);
}

}  // namespace
}  // namespace mms
