// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "mmsformer/checkpoint.hpp"
#include "mmsformer/cost_model.hpp"
#include "mmsformer/dataset.hpp"
#include "mmsformer/experiments.hpp"
#include "mmsformer/grad_suite.hpp"
#include "mmsformer/records.hpp"
#include "mmsformer/training.hpp"

namespace mms::cli {

namespace fs = std::filesystem;

namespace {

struct Invocation {
  std::string config_path;
  std::string dataset;
  std::string out;
  std::string checkpoint;
  std::string modalities;
  std::string variant;
  std::string split;
  std::string preset = "desk";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  bool check = false;
};

// Keys outside the model/train/synthetic groups that the CLI understands.
const std::vector<std::string> kRunKeys = {"run.dataset", "run.modalities", "run.split",  "experiment.seeds",
                                           "cost.height", "cost.width",     "cost.max_depth"};

void check_known_keys(const KeyValues& kv) {
  static const std::vector<std::string> groups = {"model.", "encoder.", "fusion.", "decoder.", "train.", "synthetic."};
  for (const auto& [key, value] : kv.entries()) {
    bool ok = std::find(kRunKeys.begin(), kRunKeys.end(), key) != kRunKeys.end();
    for (const auto& g : groups) ok = ok || key.rfind(g, 0) == 0;
    if (!ok) throw ConfigError("unknown config key " + key);
  }
}

// Effective configuration: defaults, then the config file, then flags, then
// --set overrides in order (last write wins). `explicit_keys` receives
// everything that did not come from the defaults.
KeyValues effective_config(const Invocation& inv, const KeyValues& defaults, KeyValues* explicit_keys = nullptr) {
  KeyValues given;
  if (!inv.config_path.empty()) given.merge(KeyValues::load(inv.config_path));
  if (inv.seed) {
    const std::string s = std::to_string(*inv.seed);
    given.set("model.seed", s);
    given.set("train.seed", s);
    given.set("synthetic.seed", s);
  }
  if (!inv.variant.empty()) given.set("model.variant", inv.variant);
  if (!inv.dataset.empty()) given.set("run.dataset", inv.dataset);
  if (!inv.modalities.empty()) given.set("run.modalities", inv.modalities);
  if (!inv.split.empty()) given.set("run.split", inv.split);
  for (const auto& s : inv.sets) given.apply_override(s);
  check_known_keys(given);
  KeyValues kv = defaults;
  kv.merge(given);
  if (explicit_keys) *explicit_keys = given;
  return kv;
}

std::string get_or(const KeyValues& kv, const std::string& key, const std::string& fallback = {}) {
  return kv.get(key).value_or(fallback);
}

fs::path require_out(const Invocation& inv) {
  if (inv.out.empty()) throw ConfigError("an output directory is required (--out)");
  fs::create_directories(inv.out);
  return inv.out;
}

void echo_config(const Invocation& inv, const KeyValues& kv) {
  if (!inv.out.empty()) kv.save(fs::path(inv.out) / "effective_config.txt");
}

KeyValues model_train_defaults() {
  KeyValues kv = ModelConfig::desk().to_key_values();
  kv.merge(TrainConfig{}.to_key_values());
  return kv;
}

struct LoadedData {
  fs::path root;
  DatasetManifest manifest;
  std::vector<std::string> modalities;
  Dataset train;
  Dataset val;

  // Validation split when present, else the training split.
  const Dataset& eval_set() const { return val.empty() ? train : val; }
  std::string eval_split() const { return val.empty() ? "train" : "val"; }
};

LoadedData load_data(const KeyValues& kv) {
  LoadedData d;
  const std::string root = get_or(kv, "run.dataset");
  if (root.empty()) throw ConfigError("no dataset given (--dataset)");
  d.root = root;
  d.manifest = load_manifest(d.root);
  d.modalities = kv.contains("run.modalities") ? split_list(*kv.get("run.modalities")) : d.manifest.modalities;
  for (const auto& m : d.modalities) d.manifest.modality_index(m);
  d.train = load_split(d.root, "train", d.modalities);
  if (d.manifest.splits.count("val") && !d.manifest.split("val").empty()) d.val = load_split(d.root, "val", d.modalities);
  return d;
}

// Model config with modality and class counts taken from the data; explicit
// settings that disagree are errors.
ModelConfig model_for_data(KeyValues& kv, const KeyValues& explicit_keys, Index modalities, Index classes) {
  if (explicit_keys.contains("model.num_modalities") &&
      parse_int("model.num_modalities", *explicit_keys.get("model.num_modalities")) != modalities) {
    throw ArityError("model.num_modalities = " + *explicit_keys.get("model.num_modalities") + " but the dataset provides " +
                     std::to_string(modalities) + " modalities");
  }
  if (explicit_keys.contains("decoder.num_classes") &&
      parse_int("decoder.num_classes", *explicit_keys.get("decoder.num_classes")) != classes) {
    throw ConfigError("decoder.num_classes = " + *explicit_keys.get("decoder.num_classes") + " but the dataset has " +
                      std::to_string(classes) + " classes");
  }
  kv.set("model.num_modalities", std::to_string(modalities));
  kv.set("decoder.num_classes", std::to_string(classes));
  ModelConfig mc = ModelConfig::from_key_values(kv);
  mc.validate();
  return mc;
}

std::vector<std::uint64_t> seeds_from(const KeyValues& kv) {
  std::vector<std::uint64_t> seeds;
  for (const auto s : parse_int_list("experiment.seeds", get_or(kv, "experiment.seeds", "1,2,3"))) {
    if (s < 0) throw ConfigError("experiment.seeds must be non-negative");
    seeds.push_back(static_cast<std::uint64_t>(s));
  }
  if (seeds.empty()) throw ConfigError("experiment.seeds is empty");
  return seeds;
}

std::function<void(const std::string&)> progress_to(std::ostream& err) {
  return [&err](const std::string& line) { err << line << std::endl; };
}

// Table-2-style report: one row, one column per class plus the mean.
void write_eval_report(const fs::path& out_dir, const std::string& row_name, const std::string& split,
                       const std::vector<std::string>& classes, const ConfusionMatrix& cm, std::ostream& out) {
  const auto ious = per_class_iou(cm);
  const std::string table = format_iou_table({row_name}, {ious}, classes);
  out << "per-class IoU (%) on " << split << "\n" << table;
  if (out_dir.empty()) return;
  write_text(out_dir / "eval_report.txt", table);
  Json j;
  j["name"] = row_name;
  j["split"] = split;
  Json per_class = Json::object();
  for (std::size_t c = 0; c < classes.size(); ++c) per_class[classes[c]] = ious[c] ? Json(*ious[c]) : Json(nullptr);
  j["class_iou"] = per_class;
  j["miou"] = miou(cm);
  write_jsonl(out_dir / "eval_report.jsonl", {j});
}

int cmd_train(const Invocation& inv, std::ostream& out, std::ostream& err) {
  KeyValues explicit_keys;
  KeyValues kv = effective_config(inv, model_train_defaults(), &explicit_keys);
  const fs::path out_dir = require_out(inv);
  const LoadedData data = load_data(kv);
  const ModelConfig mc = model_for_data(kv, explicit_keys, data.train.num_modalities(), data.train.num_classes());
  const TrainConfig tc = TrainConfig::from_key_values(kv);
  tc.validate();
  echo_config(inv, kv);

  MmsFormer<float> model(mc);
  err << model.summary();
  TrainOptions options;
  options.out_dir = out_dir;
  options.progress = progress_to(err);
  const TrainResult result = train(model, data.train, data.val, tc, options);
  write_eval_report(out_dir, "mmsformer", data.eval_split(), data.train.classes, evaluate(model, data.eval_set()), out);
  if (result.best_val_miou) out << "best validation mIoU " << *result.best_val_miou << " at epoch " << result.best_epoch + 1 << "\n";
  return kOk;
}

int cmd_eval(const Invocation& inv, std::ostream& out, std::ostream&) {
  if (inv.checkpoint.empty()) throw ConfigError("a checkpoint is required (--checkpoint)");
  KeyValues kv = effective_config(inv, KeyValues{});
  const MmsFormer<float> model = restore_model(load_checkpoint(inv.checkpoint));
  const std::string root = get_or(kv, "run.dataset");
  if (root.empty()) throw ConfigError("no dataset given (--dataset)");
  const DatasetManifest manifest = load_manifest(root);
  const auto modalities = kv.contains("run.modalities") ? split_list(*kv.get("run.modalities")) : manifest.modalities;
  std::string split = get_or(kv, "run.split");
  if (split.empty()) split = manifest.splits.count("val") ? "val" : "train";
  const Dataset data = load_split(root, split, modalities);
  if (data.num_modalities() != model.config().num_modalities) {
    throw ArityError("checkpoint expects " + std::to_string(model.config().num_modalities) + " modalities, dataset gives " +
                     std::to_string(data.num_modalities()));
  }
  if (data.num_classes() != model.config().decoder.num_classes) {
    throw ConfigError("checkpoint has " + std::to_string(model.config().decoder.num_classes) + " classes, dataset has " +
                      std::to_string(data.num_classes()));
  }
  fs::path out_dir;
  if (!inv.out.empty()) {
    out_dir = require_out(inv);
    echo_config(inv, kv);
  }
  write_eval_report(out_dir, "mmsformer", split, data.classes, evaluate(model, data), out);
  return kOk;
}

ExperimentSetup experiment_setup(KeyValues& kv, const KeyValues& explicit_keys, const LoadedData& data,
                                 std::ostream& err) {
  ExperimentSetup setup;
  setup.model = model_for_data(kv, explicit_keys, data.train.num_modalities(), data.train.num_classes());
  setup.train = TrainConfig::from_key_values(kv);
  setup.train.validate();
  setup.seeds = seeds_from(kv);
  kv.set("experiment.seeds", [&] {
    std::vector<std::string> s;
    for (const auto v : setup.seeds) s.push_back(std::to_string(v));
    return join(s, ",");
  }());
  setup.progress = progress_to(err);
  return setup;
}

int report_check(const CheckResult& check, std::ostream& out) {
  for (const auto& line : check.lines) out << "check: " << line << "\n";
  return check.passed ? kOk : kCheckFailed;
}

int cmd_ablate(const Invocation& inv, std::ostream& out, std::ostream& err) {
  KeyValues explicit_keys;
  KeyValues kv = effective_config(inv, model_train_defaults(), &explicit_keys);
  const fs::path out_dir = require_out(inv);
  const LoadedData data = load_data(kv);
  const ExperimentSetup setup = experiment_setup(kv, explicit_keys, data, err);
  echo_config(inv, kv);
  const AblationReport report = run_ablation(setup, data.train, data.eval_set());
  out << "fusion ablation, median over seeds, mIoU (%) on " << data.eval_split() << "\n" << report.to_text();
  write_text(out_dir / "ablation.txt", report.to_text());
  write_jsonl(out_dir / "ablation.jsonl", report.to_records());
  return inv.check ? report_check(check_ablation(report), out) : kOk;
}

int cmd_modalities(const Invocation& inv, std::ostream& out, std::ostream& err) {
  KeyValues kv = effective_config(inv, model_train_defaults());
  const fs::path out_dir = require_out(inv);
  const LoadedData data = load_data(kv);
  // Each prefix gets its own modality count, so explicit counts are not
  // checked against the full dataset here.
  const ExperimentSetup setup = experiment_setup(kv, KeyValues{}, data, err);
  echo_config(inv, kv);
  const ModalityReport report = run_modalities(setup, data.train, data.eval_set());
  out << "modality prefixes, median over seeds, IoU (%) on " << data.eval_split() << "\n" << report.to_text();
  write_text(out_dir / "modalities.txt", report.to_text());
  write_jsonl(out_dir / "modalities.jsonl", report.to_records());
  if (!inv.check) return kOk;
  const std::string mode = get_or(data.manifest.extra, "synthetic.mode");
  if (mode == "xor_fusion") return report_check(check_modalities_xor(report), out);
  if (mode == "per_class_modality") return report_check(check_modalities_per_class(report), out);
  out << "check: no thresholds are defined for this dataset\n";
  return kOk;
}

int cmd_cost(const Invocation& inv, std::ostream& out, std::ostream&) {
  ModelConfig base;
  Index size = 64;
  if (inv.preset == "full") {
    base = ModelConfig::full_scale();
    base.num_modalities = 4;
    size = 512;
  } else if (inv.preset == "desk") {
    base = ModelConfig::desk();
    base.num_modalities = 2;
  } else {
    throw ConfigError("unknown preset '" + inv.preset + "' (desk, full)");
  }
  KeyValues defaults = base.to_key_values();
  defaults.set("cost.height", std::to_string(size));
  defaults.set("cost.width", std::to_string(size));
  defaults.set("cost.max_depth", "3");
  const KeyValues kv = effective_config(inv, defaults);
  const ModelConfig mc = ModelConfig::from_key_values(kv, base);
  const Index h = parse_int("cost.height", *kv.get("cost.height"));
  const Index w = parse_int("cost.width", *kv.get("cost.width"));
  const CostReport report = count_flops(mc, h, w);
  out << report.to_text(static_cast<int>(parse_int("cost.max_depth", *kv.get("cost.max_depth"))));
  const FusionCostComparison cmp = compare_fusion_with_paper(mc, h, w);
  out << cmp.to_text();
  if (!inv.out.empty()) {
    const fs::path out_dir = require_out(inv);
    echo_config(inv, kv);
    auto records = report.to_records();
    Json j;
    j["path"] = "comparison.fusion";
    j["params_m"] = cmp.params_m;
    j["gflops"] = cmp.gflops;
    j["gmacs"] = cmp.gmacs;
    j["published_params_m"] = kPaperFusionParamsM;
    j["published_gflops"] = kPaperFusionGflops;
    j["params_deviation"] = cmp.params_deviation;
    j["gflops_deviation"] = cmp.gflops_deviation;
    j["gmacs_deviation"] = cmp.gmacs_deviation;
    j["assumptions"] = cmp.assumptions;
    records.push_back(j);
    write_jsonl(out_dir / "cost.jsonl", records);
    write_text(out_dir / "cost.txt", report.to_text() + cmp.to_text());
  }
  return kOk;
}

int cmd_gradcheck(const Invocation& inv, std::ostream& out, std::ostream&) {
  const KeyValues kv = effective_config(inv, KeyValues{});
  const auto entries = run_gradient_suite(inv.seed.value_or(0));
  out << format_gradient_suite(entries);
  bool ok = true;
  std::vector<Json> records;
  for (const auto& e : entries) {
    ok = ok && e.passed();
    Json j;
    j["case"] = e.name;
    j["error32"] = e.error32;
    j["error64"] = e.error64;
    j["coordinates"] = e.coordinates;
    j["passed"] = e.passed();
    records.push_back(j);
  }
  if (!inv.out.empty()) {
    const fs::path out_dir = require_out(inv);
    echo_config(inv, kv);
    write_jsonl(out_dir / "gradcheck.jsonl", records);
  }
  return ok ? kOk : kNumericError;
}

int cmd_synth(const Invocation& inv, std::ostream& out, std::ostream&) {
  const KeyValues kv = effective_config(inv, SyntheticSpec{}.to_key_values());
  const fs::path out_dir = require_out(inv);
  const SyntheticSpec spec = SyntheticSpec::from_key_values(kv);
  const DatasetManifest m = generate_synthetic(spec, out_dir);
  echo_config(inv, kv);
  out << "wrote " << to_string(spec.mode) << " dataset to " << out_dir.string() << ": " << m.modalities.size()
      << " modalities, " << m.classes.size() << " classes, " << spec.train_samples << " train / " << spec.val_samples
      << " val samples of " << spec.extent << "x" << spec.extent << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal segmentation with per-stage fusion: training, evaluation and cost tooling", "mmsformer"};
  app.require_subcommand(1);
  Invocation inv;

  auto common = [&inv](CLI::App* sub) {
    sub->add_option("--config", inv.config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", inv.sets, "override key=value (repeatable, applied last)")->take_all();
    sub->add_option("--seed", inv.seed, "seed for model init, shuffling and generation");
    sub->add_option("--out", inv.out, "output directory");
  };
  auto data_opts = [&inv](CLI::App* sub) {
    sub->add_option("--dataset", inv.dataset, "dataset root (contains manifest.txt)");
    sub->add_option("--modalities", inv.modalities, "comma-separated modality subset, in order");
  };

  auto* train_cmd = app.add_subcommand("train", "train a model and write log, checkpoints and an eval report");
  common(train_cmd);
  data_opts(train_cmd);
  train_cmd->add_option("--variant", inv.variant, "fusion variant");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  common(eval_cmd);
  data_opts(eval_cmd);
  eval_cmd->add_option("--checkpoint", inv.checkpoint, "checkpoint file")->check(CLI::ExistingFile);
  eval_cmd->add_option("--split", inv.split, "split to evaluate (default: val, else train)");

  auto* ablate_cmd = app.add_subcommand("ablate", "train every fusion variant over a seed set");
  common(ablate_cmd);
  data_opts(ablate_cmd);
  ablate_cmd->add_flag("--check", inv.check, "exit 4 unless full >= linear_only and full >= no_parallel_convs");

  auto* modal_cmd = app.add_subcommand("modalities", "train on nested modality prefixes");
  common(modal_cmd);
  data_opts(modal_cmd);
  modal_cmd->add_option("--variant", inv.variant, "fusion variant");
  modal_cmd->add_flag("--check", inv.check, "exit 4 unless the synthetic dataset's modality thresholds hold");

  auto* cost_cmd = app.add_subcommand("cost", "analytic parameter and FLOP report");
  common(cost_cmd);
  cost_cmd->add_option("--variant", inv.variant, "fusion variant");
  cost_cmd->add_option("--preset", inv.preset, "desk or full")->capture_default_str();

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suite in 32- and 64-bit");
  common(grad_cmd);

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic multimodal dataset");
  common(synth_cmd);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train_cmd) return cmd_train(inv, out, err);
    if (*eval_cmd) return cmd_eval(inv, out, err);
    if (*ablate_cmd) return cmd_ablate(inv, out, err);
    if (*modal_cmd) return cmd_modalities(inv, out, err);
    if (*cost_cmd) return cmd_cost(inv, out, err);
    if (*grad_cmd) return cmd_gradcheck(inv, out, err);
    if (*synth_cmd) return cmd_synth(inv, out, err);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kConfigError;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
  return kInternalError;
}

}  // namespace mms::cli
