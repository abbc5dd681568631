// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <functional>

#include "mmsformer/cost_model.hpp"
#include "mmsformer/model.hpp"

namespace mms {
namespace {

ModelConfig desk(Index m, Variant v = Variant::full) {
  ModelConfig cfg = ModelConfig::desk();
  cfg.num_modalities = m;
  cfg.variant = v;
  return cfg;
}

const CostNode& at(const CostReport& r, const std::string& path) {
  const CostNode* n = r.root.find(path);
  if (!n) throw std::runtime_error("no cost node " + path);
  return *n;
}

TEST(CostModel, SingleLinearFormula) {
  ModelConfig cfg = desk(1);
  cfg.decoder.embed_dim = 8;
  cfg.decoder.num_classes = 4;
  EXPECT_EQ(at(count_params(cfg), "decoder.classifier").params, 36);
}

// C=8, M=2, depthwise 3/5/7, r=4 (hidden 2), summed layer by layer.
constexpr std::int64_t kHandParams = (16 * 8 + 8)                                      // linear_fuse
                                     + (8 * 8 + 8)                                     // proj_in
                                     + (9 * 8 + 8) + (25 * 8 + 8) + (49 * 8 + 8)       // depthwise convs
                                     + (8 * 8 + 8)                                     // proj_out
                                     + (8 * 2 + 2) + (2 * 8 + 8);                      // SE
constexpr std::int64_t kPixels = 16 * 16;
constexpr std::int64_t kHandFlops = kPixels * (2 * 16 * 8 + 8)                             // linear_fuse
                                    + kPixels * (2 * 8 * 8 + 8)                            // proj_in
                                    + kPixels * ((2 * 9 * 8 + 8) + (2 * 25 * 8 + 8) + (2 * 49 * 8 + 8))
                                    + kPixels * (2 * 8 * 8 + 8)                            // proj_out
                                    + (2 * 8 * 2 + 2) + (2 * 2 * 8 + 8);                   // SE, once per image

TEST(CostModel, DeskFusionStageHandCount) {
  ModelConfig cfg = desk(2);
  cfg.fusion.se_reduction = 4;
  EXPECT_EQ(kHandParams, 1010);
  EXPECT_EQ(at(count_params(cfg), "fusion.1").params, kHandParams);
  const auto flops = count_flops(cfg, 64, 64);
  EXPECT_EQ(at(flops, "fusion.1").flops, kHandFlops);
  EXPECT_EQ(at(flops, "fusion.1").params, kHandParams);
  // 1×1 map C→C on H×W: 2·H·W·C² plus one bias add per output.
  EXPECT_EQ(at(flops, "fusion.1.proj_in").flops, 2 * kPixels * 64 + kPixels * 8);
  EXPECT_EQ(at(flops, "fusion.1.proj_in").macs, kPixels * 64);
}

TEST(CostModel, ParamsMatchBuiltModelAcrossConfigMatrix) {
  int configs = 0;
  for (const Index m : {1, 2, 4}) {
    for (const Variant v : {Variant::full, Variant::no_channel_attention, Variant::kernels_3_7_11,
                            Variant::linear_only}) {
      ModelConfig cfg = desk(m, v);
      if (configs % 3 == 1) cfg.fusion.conv_grouping = ConvGrouping::dense;
      if (configs % 4 == 2) cfg.encoder.stages[1].depth = 2;
      if (configs % 5 == 3) cfg.fusion.se_reduction = 3;
      cfg.decoder.num_classes = 2 + configs % 5;
      const MmsFormer<float> model(cfg);
      EXPECT_EQ(count_params(cfg).root.params, model.parameters().total_elements())
          << "M=" << m << " " << to_string(v);
      ++configs;
    }
  }
  EXPECT_EQ(configs, 12);
}

TEST(CostModel, FusionParamsAffineInModalities) {
  for (const Variant v : kAllVariants) {
    std::int64_t slope = 0;
    for (const auto& s : ModelConfig::desk().encoder.stages) slope += s.channels * s.channels;
    const auto p1 = count_params(desk(1, v)).fusion().params;
    for (Index m = 2; m <= 5; ++m) EXPECT_EQ(count_params(desk(m, v)).fusion().params, p1 + (m - 1) * slope);
  }
  ModelConfig full = ModelConfig::full_scale();
  std::int64_t slope = 0;
  for (const auto& s : full.encoder.stages) slope += s.channels * s.channels;
  full.num_modalities = 1;
  const auto p1 = count_params(full).fusion().params;
  full.num_modalities = 4;
  EXPECT_EQ(count_params(full).fusion().params, p1 + 3 * slope);
}

TEST(CostModel, TreeTotalsAndShapeIndependence) {
  const auto flops = count_flops(desk(2), 64, 96);
  std::function<void(const CostNode&)> check = [&](const CostNode& n) {
    if (n.children.empty()) return;
    std::int64_t p = 0, f = 0, m = 0;
    for (const auto& c : n.children) {
      check(c);
      p += c.params;
      f += c.flops;
      m += c.macs;
    }
    EXPECT_EQ(n.params, p) << n.name;
    EXPECT_EQ(n.flops, f) << n.name;
    EXPECT_EQ(n.macs, m) << n.name;
  };
  check(flops.root);
  EXPECT_EQ(flops.root.params, count_params(desk(2)).root.params);
  EXPECT_EQ(count_flops(desk(2), 128, 32).root.params, flops.root.params);
  EXPECT_THROW(count_flops(desk(2), 48, 64), ConfigError);
}

TEST(CostModel, DoublingExtentsQuadruplesConvAndPerPixelTerms) {
  const auto a = count_flops(desk(2), 64, 64), b = count_flops(desk(2), 128, 128);
  std::function<void(const CostNode&, const std::string&)> walk = [&](const CostNode& n, const std::string& path) {
    for (const auto& c : n.children) {
      const std::string p = path.empty() ? c.name : path + "." + c.name;
      if (c.children.empty()) {
        const bool per_image = p.find(".se.") != std::string::npos;
        const bool quadratic = c.name == "scores" || c.name == "mix";
        const CostNode& other = *b.root.find(p);
        if (per_image) {
          EXPECT_EQ(other.flops, c.flops) << p;
        } else if (quadratic) {
          EXPECT_EQ(other.flops, 16 * c.flops) << p;
        } else {
          EXPECT_EQ(other.flops, 4 * c.flops) << p;
        }
      }
      walk(c, p);
    }
  };
  walk(a.root, "");
}

TEST(CostModel, ReportsAndFullScaleComparison) {
  const auto report = count_flops(desk(2), 64, 64);
  const auto records = report.to_records();
  EXPECT_EQ(records.front()["path"], "model");
  EXPECT_EQ(records.front()["params"], report.root.params);
  EXPECT_NE(report.to_text(2).find("fusion"), std::string::npos);
  const auto cmp = compare_fusion_with_paper();
  EXPECT_NEAR(cmp.params_deviation, cmp.params_m / kPaperFusionParamsM - 1, 1e-12);
  EXPECT_NEAR(cmp.gflops_deviation, cmp.gflops / kPaperFusionGflops - 1, 1e-12);
  EXPECT_NEAR(cmp.gmacs * 2, cmp.gflops, 0.01 * cmp.gflops);
  EXPECT_NE(cmp.to_text().find("3.23"), std::string::npos) << cmp.to_text();
}

}  // namespace
}  // namespace mms
