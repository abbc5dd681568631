// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmsformer/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

namespace mms {

ConfusionMatrix::ConfusionMatrix(Index num_classes)
    : k_(num_classes), counts_(static_cast<std::size_t>(num_classes * num_classes), 0) {
  if (num_classes < 1) throw ConfigError("confusion matrix needs at least one class");
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

void ConfusionMatrix::accumulate(const LabelMap& pred, const LabelMap& truth, std::uint8_t ignore_index) {
  if (pred.height != truth.height || pred.width != truth.width) {
    throw ShapeError("accumulate: prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                     " vs truth " + std::to_string(truth.height) + "x" + std::to_string(truth.width));
  }
  for (Index y = 0; y < truth.height; ++y) {
    for (Index x = 0; x < truth.width; ++x) {
      const Index t = truth.at(y, x);
      if (t == ignore_index) continue;
      const Index p = pred.at(y, x);
      if (t >= k_ || p >= k_) {
        throw DataError("accumulate: label out of range at pixel (" + std::to_string(y) + ", " + std::to_string(x) +
                        "): truth " + std::to_string(t) + ", prediction " + std::to_string(p) + ", " +
                        std::to_string(k_) + " classes");
      }
      ++counts_[static_cast<std::size_t>(t * k_ + p)];
    }
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw ShapeError("merge: class counts differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

ConfusionMatrix ConfusionMatrix::from_counts(Index num_classes, std::vector<std::uint64_t> counts) {
  ConfusionMatrix cm(num_classes);
  if (counts.size() != cm.counts_.size()) throw ShapeError("from_counts: expected K*K entries");
  cm.counts_ = std::move(counts);
  return cm;
}

std::vector<std::optional<double>> per_class_iou(const ConfusionMatrix& cm) {
  const Index k = cm.num_classes();
  std::vector<std::optional<double>> out(static_cast<std::size_t>(k));
  for (Index c = 0; c < k; ++c) {
    std::uint64_t row = 0;
    std::uint64_t col = 0;
    for (Index j = 0; j < k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const std::uint64_t tp = cm.at(c, c);
    const std::uint64_t denom = row + col - tp;
    if (denom > 0) out[static_cast<std::size_t>(c)] = static_cast<double>(tp) / static_cast<double>(denom);
  }
  return out;
}

double mean_defined(const std::vector<std::optional<double>>& values) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& v : values) {
    if (v) {
      total += *v;
      ++n;
    }
  }
  if (n == 0) throw UndefinedError("mIoU: no class is defined (empty confusion matrix)");
  return total / static_cast<double>(n);
}

double miou(const ConfusionMatrix& cm) { return mean_defined(per_class_iou(cm)); }

std::string format_iou_table(const std::vector<std::string>& row_names,
                             const std::vector<std::vector<std::optional<double>>>& rows,
                             const std::vector<std::string>& class_names) {
  std::size_t name_width = 6;
  for (const auto& n : row_names) name_width = std::max(name_width, n.size());
  std::vector<std::size_t> widths;
  for (const auto& c : class_names) widths.push_back(std::max<std::size_t>(6, c.size()));
  widths.push_back(6);

  std::string out;
  char buf[64];
  auto pad = [](const std::string& s, std::size_t w) { return std::string(w > s.size() ? w - s.size() : 0, ' ') + s; };
  out += std::string(name_width, ' ');
  for (std::size_t c = 0; c < class_names.size(); ++c) out += " " + pad(class_names[c], widths[c]);
  out += " " + pad("Mean", widths.back()) + "\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out += row_names[r] + std::string(name_width - row_names[r].size(), ' ');
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const auto& v = rows[r][c];
      if (v) {
        std::snprintf(buf, sizeof buf, "%.1f", 100.0 * *v);
      } else {
        std::snprintf(buf, sizeof buf, "-");
      }
      out += " " + pad(buf, widths[std::min(c, widths.size() - 1)]);
    }
    std::string mean = "-";
    try {
      std::snprintf(buf, sizeof buf, "%.1f", 100.0 * mean_defined(rows[r]));
      mean = buf;
    } catch (const UndefinedError&) {
    }
    out += " " + pad(mean, widths.back()) + "\n";
  }
  return out;
}

}  // namespace mms
