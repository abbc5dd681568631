// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <numeric>

#include "mmsformer/metrics.hpp"
#include "mmsformer/rng.hpp"

namespace mms {
namespace {

LabelMap random_labels(Rng& rng, Index k, double ignore_rate = 0.1) {
  LabelMap m(8, 8);
  for (auto& l : m.labels) l = rng.uniform() < ignore_rate ? kIgnoreIndex : static_cast<std::uint8_t>(rng.below(k));
  return m;
}

// Hand count straight from the pixel lists.
std::vector<std::optional<double>> counted_iou(const LabelMap& pred, const LabelMap& truth, Index k) {
  std::vector<std::optional<double>> out;
  for (Index c = 0; c < k; ++c) {
    long inter = 0, uni = 0;
    for (std::size_t i = 0; i < truth.labels.size(); ++i) {
      if (truth.labels[i] == kIgnoreIndex) continue;
      const bool t = truth.labels[i] == c, p = pred.labels[i] == c;
      inter += t && p;
      uni += t || p;
    }
    out.push_back(uni == 0 ? std::nullopt : std::optional<double>(static_cast<double>(inter) / uni));
  }
  return out;
}

TEST(ConfusionMatrix, SpecExample) {
  const auto cm = ConfusionMatrix::from_counts(2, {3, 1, 2, 4});
  const auto iou = per_class_iou(cm);
  EXPECT_EQ(*iou[0], 0.5);
  EXPECT_EQ(*iou[1], 4.0 / 7.0);
  EXPECT_NEAR(*iou[1], 0.5714, 5e-5);
  EXPECT_NEAR(miou(cm), 0.5357, 5e-5);
  EXPECT_EQ(miou(cm), (0.5 + 4.0 / 7.0) / 2);
}

TEST(ConfusionMatrix, PerfectDisjointAndMasked) {
  Rng rng(1);
  const LabelMap truth = random_labels(rng, 4, 0.0);
  ConfusionMatrix cm(4);
  cm.accumulate(truth, truth);
  for (Index t = 0; t < 4; ++t)
    for (Index p = 0; p < 4; ++p)
      if (t != p) EXPECT_EQ(cm.at(t, p), 0u);
  for (const auto& v : per_class_iou(cm))
    if (v) EXPECT_EQ(*v, 1.0);

  ConfusionMatrix d(2);
  d.accumulate(LabelMap(4, 4, 1), LabelMap(4, 4, 0));
  EXPECT_EQ(*per_class_iou(d)[0], 0.0);
  EXPECT_EQ(*per_class_iou(d)[1], 0.0);

  ConfusionMatrix masked(3);
  masked.accumulate(LabelMap(4, 4, 2), LabelMap(4, 4, kIgnoreIndex));
  EXPECT_EQ(masked, ConfusionMatrix(3));
  EXPECT_THROW(miou(masked), UndefinedError);

  ConfusionMatrix single(1);
  single.accumulate(LabelMap(2, 2, 0), LabelMap(2, 2, 0));
  EXPECT_EQ(miou(single), 1.0);
}

TEST(ConfusionMatrix, FiftyRandomPairsMatchCountingOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Index k = 2 + static_cast<Index>(rng.below(5));
    const LabelMap truth = random_labels(rng, k), pred = random_labels(rng, k, 0.0);
    ConfusionMatrix cm(k);
    cm.accumulate(pred, truth);
    std::uint64_t valid = 0;
    for (const auto l : truth.labels) valid += l != kIgnoreIndex;
    EXPECT_EQ(cm.total(), valid);
    const auto expected = counted_iou(pred, truth, k);
    EXPECT_EQ(per_class_iou(cm), expected);
    std::vector<double> defined;
    for (const auto& v : expected)
      if (v) defined.push_back(*v);
    EXPECT_EQ(miou(cm), std::accumulate(defined.begin(), defined.end(), 0.0) / static_cast<double>(defined.size()));
    for (const auto& v : per_class_iou(cm)) {
      if (!v) continue;
      EXPECT_GE(*v, 0.0);
      EXPECT_LE(*v, 1.0);
    }
  }
}

TEST(ConfusionMatrix, AccumulationOrderIrrelevant) {
  Rng rng(3);
  std::vector<std::pair<LabelMap, LabelMap>> images;
  for (int i = 0; i < 6; ++i) images.emplace_back(random_labels(rng, 3, 0.0), random_labels(rng, 3));
  ConfusionMatrix forward(3), backward(3), halves_a(3), halves_b(3);
  for (std::size_t i = 0; i < images.size(); ++i) {
    forward.accumulate(images[i].first, images[i].second);
    backward.accumulate(images[5 - i].first, images[5 - i].second);
    (i < 3 ? halves_a : halves_b).accumulate(images[i].first, images[i].second);
  }
  halves_b.merge(halves_a);
  EXPECT_EQ(forward, backward);
  EXPECT_EQ(forward, halves_b);
}

TEST(ConfusionMatrix, ClassPermutationInvariance) {
  Rng rng(4);
  const std::vector<std::uint8_t> perm{2, 0, 3, 1};
  for (int trial = 0; trial < 10; ++trial) {
    LabelMap truth = random_labels(rng, 4), pred = random_labels(rng, 4, 0.0);
    ConfusionMatrix cm(4);
    cm.accumulate(pred, truth);
    for (auto& l : truth.labels)
      if (l != kIgnoreIndex) l = perm[l];
    for (auto& l : pred.labels) l = perm[l];
    ConfusionMatrix permuted(4);
    permuted.accumulate(pred, truth);
    const auto a = per_class_iou(cm), b = per_class_iou(permuted);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(b[perm[c]], a[c]);
  }
}

TEST(ConfusionMatrix, ErrorsNamePixels) {
  LabelMap truth(3, 3, 0), pred(3, 3, 0);
  truth.at(2, 1) = 5;
  try {
    ConfusionMatrix(3).accumulate(pred, truth);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("(2, 1)"), std::string::npos) << e.what();
  }
  EXPECT_THROW(ConfusionMatrix(3).accumulate(LabelMap(2, 3), LabelMap(3, 3)), ShapeError);
}

TEST(Miou, PublishedPerClassRowReproducesMean) {
  const std::vector<double> row{88.0, 48.3, 56.2, 72.2, 35.4, 54.9, 0.5,  34.6, 29.4, 67.2,
                                69.0, 29.9, 73.4, 44.7, 59.5, 47.8, 77.1, 50.5, 26.9, 96.6};
  ASSERT_EQ(row.size(), 20u);
  std::vector<std::optional<double>> values(row.begin(), row.end());
  EXPECT_NEAR(mean_defined(values), 53.1, 0.05);
}

TEST(Miou, TableFormatting) {
  const auto text = format_iou_table({"a"}, {{0.5, std::nullopt, 0.25}}, {"x", "y", "z"});
  EXPECT_NE(text.find("50.0"), std::string::npos) << text;
  EXPECT_NE(text.find("37.5"), std::string::npos) << text;
  EXPECT_NE(text.find("Mean"), std::string::npos);
}

}  // namespace
}  // namespace mms
