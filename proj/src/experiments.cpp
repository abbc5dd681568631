// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmsformer/experiments.hpp"

#include <algorithm>
#include <cstdio>

#include "mmsformer/cost_model.hpp"

namespace mms {

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

Dataset select_modalities(const Dataset& data, const std::vector<std::string>& names) {
  std::vector<std::size_t> index;
  for (const auto& name : names) {
    const auto it = std::find(data.modalities.begin(), data.modalities.end(), name);
    if (it == data.modalities.end()) {
      throw ConfigError("modality '" + name + "' not in dataset (have " + join(data.modalities, ",") + ")");
    }
    index.push_back(static_cast<std::size_t>(it - data.modalities.begin()));
  }
  Dataset out;
  out.modalities = names;
  out.classes = data.classes;
  for (const auto& s : data.samples) {
    Sample t{s.id, {}, s.labels};
    for (const std::size_t i : index) t.images.push_back(s.images[i]);
    out.samples.push_back(std::move(t));
  }
  return out;
}

namespace {

ModelConfig fit_to_data(ModelConfig cfg, const Dataset& data) {
  cfg.num_modalities = data.num_modalities();
  cfg.decoder.num_classes = data.num_classes();
  return cfg;
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

std::string signed_percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1f", 100.0 * v);
  return buf;
}

std::string pad_left(const std::string& s, std::size_t w) { return std::string(w > s.size() ? w - s.size() : 0, ' ') + s; }
std::string pad_right(const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); }

}  // namespace

std::vector<std::vector<std::optional<double>>> train_seeds(const ExperimentSetup& setup, const Dataset& train_set,
                                                            const Dataset& eval_set) {
  std::vector<std::vector<std::optional<double>>> out;
  for (const std::uint64_t seed : setup.seeds) {
    ModelConfig mc = fit_to_data(setup.model, train_set);
    mc.seed = seed;
    TrainConfig tc = setup.train;
    tc.seed = seed;
    MmsFormer<float> model(mc);
    train(model, train_set, Dataset{}, tc);
    out.push_back(per_class_iou(evaluate(model, eval_set)));
  }
  return out;
}

const AblationRow& AblationReport::row(Variant v) const {
  for (const auto& r : rows) {
    if (r.variant == v) return r;
  }
  throw ContractError("ablation report lacks variant " + to_string(v));
}

AblationReport run_ablation(const ExperimentSetup& setup, const Dataset& train_set, const Dataset& eval_set) {
  AblationReport report;
  for (const Variant v : kAllVariants) {
    ExperimentSetup s = setup;
    s.model.variant = v;
    AblationRow row;
    row.variant = v;
    row.params = count_params(fit_to_data(s.model, train_set)).root.params;
    for (const auto& ious : train_seeds(s, train_set, eval_set)) row.per_seed.push_back(mean_defined(ious));
    row.median_miou = median(row.per_seed);
    if (setup.progress) setup.progress("ablation " + to_string(v) + ": median mIoU " + percent(row.median_miou));
    report.rows.push_back(std::move(row));
  }
  for (auto& r : report.rows) r.delta = r.median_miou - report.rows.front().median_miou;
  return report;
}

std::string AblationReport::to_text() const {
  std::string out = pad_right("variant", 22) + pad_left("params", 10) + pad_left("mIoU", 8) + pad_left("delta", 8) +
                    "  per-seed mIoU\n";
  for (const auto& r : rows) {
    std::string seeds;
    for (const double v : r.per_seed) seeds += " " + percent(v);
    out += pad_right(to_string(r.variant), 22) + pad_left(std::to_string(r.params), 10) +
           pad_left(percent(r.median_miou), 8) + pad_left(r.variant == Variant::full ? "-" : signed_percent(r.delta), 8) +
           " " + seeds + "\n";
  }
  return out;
}

std::vector<Json> AblationReport::to_records() const {
  std::vector<Json> out;
  for (const auto& r : rows) {
    Json j;
    j["variant"] = to_string(r.variant);
    j["params"] = r.params;
    j["miou"] = r.median_miou;
    j["delta_vs_full"] = r.delta;
    j["per_seed_miou"] = r.per_seed;
    out.push_back(std::move(j));
  }
  return out;
}

ModalityReport run_modalities(const ExperimentSetup& setup, const Dataset& train_set, const Dataset& eval_set) {
  if (train_set.num_modalities() < 2) throw ConfigError("modality sweep needs a dataset with at least 2 modalities");
  ModalityReport report;
  report.classes = train_set.classes;
  for (Index m = 1; m <= train_set.num_modalities(); ++m) {
    const std::vector<std::string> names(train_set.modalities.begin(), train_set.modalities.begin() + m);
    const auto per_seed = train_seeds(setup, select_modalities(train_set, names), select_modalities(eval_set, names));
    ModalityRow row;
    row.modalities = names;
    for (const auto& ious : per_seed) row.per_seed.push_back(mean_defined(ious));
    row.median_miou = median(row.per_seed);
    for (std::size_t c = 0; c < report.classes.size(); ++c) {
      std::vector<double> values;
      for (const auto& ious : per_seed) values.push_back(ious[c].value_or(0.0));
      row.median_class_iou.push_back(median(values));
    }
    if (setup.progress) setup.progress("modalities " + join(names, "+") + ": median mIoU " + percent(row.median_miou));
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string ModalityReport::to_text() const {
  std::size_t name_width = 10;
  for (const auto& r : rows) name_width = std::max(name_width, join(r.modalities, " & ").size() + 2);
  std::string out = pad_right("modalities", name_width);
  for (const auto& c : classes) out += pad_left(c, std::max<std::size_t>(8, c.size() + 1));
  out += pad_left("mIoU", 8) + "  per-seed mIoU\n";
  for (const auto& r : rows) {
    out += pad_right(join(r.modalities, " & "), name_width);
    for (std::size_t c = 0; c < classes.size(); ++c) {
      out += pad_left(percent(r.median_class_iou[c]), std::max<std::size_t>(8, classes[c].size() + 1));
    }
    std::string seeds;
    for (const double v : r.per_seed) seeds += " " + percent(v);
    out += pad_left(percent(r.median_miou), 8) + " " + seeds + "\n";
  }
  return out;
}

std::vector<Json> ModalityReport::to_records() const {
  std::vector<Json> out;
  for (const auto& r : rows) {
    Json j;
    j["modalities"] = r.modalities;
    j["miou"] = r.median_miou;
    j["per_seed_miou"] = r.per_seed;
    Json classes_json = Json::object();
    for (std::size_t c = 0; c < classes.size(); ++c) classes_json[classes[c]] = r.median_class_iou[c];
    j["class_iou"] = classes_json;
    out.push_back(std::move(j));
  }
  return out;
}

CheckResult check_ablation(const AblationReport& report) {
  CheckResult result;
  const auto& full = report.row(Variant::full);
  for (const Variant v : {Variant::linear_only, Variant::no_parallel_convs}) {
    const auto& other = report.row(v);
    const bool ok = full.median_miou >= other.median_miou;
    std::string seeds;
    for (std::size_t i = 0; i < full.per_seed.size(); ++i) {
      seeds += (i ? ", " : "") + percent(full.per_seed[i]) + " vs " + percent(other.per_seed[i]);
    }
    result.lines.push_back(std::string(ok ? "ok  " : "FAIL") + " full " + percent(full.median_miou) +
                           " >= " + to_string(v) + " " + percent(other.median_miou) + " (per seed: " + seeds + ")");
    result.passed = result.passed && ok;
  }
  return result;
}

CheckResult check_modalities_xor(const ModalityReport& report, double min_gap) {
  CheckResult result;
  if (report.rows.size() < 2) throw ContractError("xor check needs at least two rows");
  const double gap = report.rows[1].median_miou - report.rows[0].median_miou;
  result.passed = gap >= min_gap;
  result.lines.push_back(std::string(result.passed ? "ok  " : "FAIL") + " mIoU(" + join(report.rows[1].modalities, "+") +
                         ") - mIoU(" + join(report.rows[0].modalities, "+") + ") = " + percent(gap) +
                         " points, need >= " + percent(min_gap));
  return result;
}

CheckResult check_modalities_per_class(const ModalityReport& report, double min_gain) {
  CheckResult result;
  const std::size_t m = report.rows.size();
  for (std::size_t c = 1; c < report.classes.size(); ++c) {
    const std::size_t j = (c - 1) % m;
    if (j == 0) continue;
    const double before = report.rows[j - 1].median_class_iou[c];
    const double after = report.rows[j].median_class_iou[c];
    const bool ok = after - before >= min_gain;
    result.lines.push_back(std::string(ok ? "ok  " : "FAIL") + " " + report.classes[c] + " IoU " + percent(before) +
                           " -> " + percent(after) + " when adding " + report.rows[j].modalities.back() +
                           ", need gain >= " + percent(min_gain));
    result.passed = result.passed && ok;
  }
  if (result.lines.empty()) throw ContractError("per-class check: no class is tied to a later modality");
  return result;
}

}  // namespace mms
