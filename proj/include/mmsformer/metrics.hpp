// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmsformer/decoder.hpp"

namespace mms {

/// K×K pixel counts, rows = ground truth, columns = prediction. Pixels whose
/// truth is the ignore index are never counted.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(Index num_classes);

  Index num_classes() const { return k_; }
  std::uint64_t at(Index truth, Index pred) const { return counts_[static_cast<std::size_t>(truth * k_ + pred)]; }
  std::uint64_t total() const;

  /// Adds one image. Raises ShapeError on extent mismatch and DataError (with
  /// pixel coordinates) on out-of-range labels.
  void accumulate(const LabelMap& pred, const LabelMap& truth, std::uint8_t ignore_index = kIgnoreIndex);
  void merge(const ConfusionMatrix& other);

  /// Builds a matrix from explicit row-major counts.
  static ConfusionMatrix from_counts(Index num_classes, std::vector<std::uint64_t> counts);

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  Index k_;
  std::vector<std::uint64_t> counts_;
};

/// IoU_c = tp / (row_c + col_c − tp); undefined (nullopt) when the class is
/// absent from both truth and prediction.
std::vector<std::optional<double>> per_class_iou(const ConfusionMatrix& cm);

/// Mean of the defined per-class IoUs. Raises UndefinedError if none is
/// defined.
double miou(const ConfusionMatrix& cm);

/// Mean of the defined entries of a per-class list.
double mean_defined(const std::vector<std::optional<double>>& values);

/// Column-aligned table, one column per class plus "Mean", values in percent.
std::string format_iou_table(const std::vector<std::string>& row_names,
                             const std::vector<std::vector<std::optional<double>>>& rows,
                             const std::vector<std::string>& class_names);

}  // namespace mms
