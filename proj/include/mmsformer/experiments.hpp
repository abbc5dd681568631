// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mmsformer/records.hpp"
#include "mmsformer/training.hpp"

namespace mms {

/// Median of a non-empty list (mean of the middle pair for even sizes).
double median(std::vector<double> values);

/// Keeps the listed modalities (by name, in the given order) of a loaded split.
Dataset select_modalities(const Dataset& data, const std::vector<std::string>& names);

struct ExperimentSetup {
  ModelConfig model;   // num_modalities and num_classes are taken from the data
  TrainConfig train;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::function<void(const std::string&)> progress;
};

/// One training run per seed; model.seed and train.seed are both set to it.
/// Returns per-seed per-class IoU on `eval_set` (undefined classes as nullopt).
std::vector<std::vector<std::optional<double>>> train_seeds(const ExperimentSetup& setup, const Dataset& train_set,
                                                            const Dataset& eval_set);

struct AblationRow {
  Variant variant = Variant::full;
  Index params = 0;
  std::vector<double> per_seed;
  double median_miou = 0.0;
  double delta = 0.0;  // vs full
};

struct AblationReport {
  std::vector<AblationRow> rows;  // fixed variant order, full first

  const AblationRow& row(Variant v) const;
  std::string to_text() const;
  std::vector<Json> to_records() const;
};

/// Trains every fusion variant over the shared seed set.
AblationReport run_ablation(const ExperimentSetup& setup, const Dataset& train_set, const Dataset& eval_set);

struct ModalityRow {
  std::vector<std::string> modalities;
  std::vector<double> per_seed;
  double median_miou = 0.0;
  /// Median over seeds of each class IoU (undefined counted as 0).
  std::vector<double> median_class_iou;
};

struct ModalityReport {
  std::vector<std::string> classes;
  std::vector<ModalityRow> rows;  // prefixes 1, 1-2, ..., 1-M

  std::string to_text() const;
  std::vector<Json> to_records() const;
};

/// Trains on nested modality prefixes of the dataset's modality order.
ModalityReport run_modalities(const ExperimentSetup& setup, const Dataset& train_set, const Dataset& eval_set);

/// Outcome of a threshold check; `lines` explain each comparison.
struct CheckResult {
  bool passed = true;
  std::vector<std::string> lines;
};

/// full ≥ linear_only and full ≥ no_parallel_convs on median mIoU.
CheckResult check_ablation(const AblationReport& report);

/// xor_fusion: median mIoU(1–2) − mIoU(1) ≥ 0.25.
CheckResult check_modalities_xor(const ModalityReport& report, double min_gap = 0.25);

/// per_class_modality: every class c ≥ 1 tied to modality j = (c−1) mod M,
/// j ≥ 1, gains ≥ `min_gain` IoU when modality j joins the prefix.
CheckResult check_modalities_per_class(const ModalityReport& report, double min_gain = 0.10);

}  // namespace mms
