// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mmsformer/dataset.hpp"
#include "mmsformer/metrics.hpp"
#include "mmsformer/model.hpp"

namespace mms {

/// Mean over non-ignored pixels of −log softmax(logits)[label]. Logits are
/// [K,H,W]. An image with no labelled pixel yields 0 and a zero gradient.
template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, const LabelMap& labels,
                             std::uint8_t ignore_index = kIgnoreIndex);

struct TrainConfig {
  double base_lr = 2e-3;
  Index total_epochs = 60;
  Index warmup_epochs = 10;
  double warmup_factor = 0.1;
  double poly_power = 0.9;
  double weight_decay = 0.01;
  double adam_eps = 1e-8;
  std::pair<double, double> adam_betas{0.9, 0.999};
  Index batch_size = 2;
  std::uint64_t seed = 0;
  /// Validation every this many epochs (and always after the last one).
  Index eval_every = 10;

  void validate() const;
  KeyValues to_key_values() const;
  /// Reads `train.*` keys on top of `base`; other prefixes are ignored.
  static TrainConfig from_key_values(const KeyValues& kv, TrainConfig base);
  static TrainConfig from_key_values(const KeyValues& kv) { return from_key_values(kv, TrainConfig{}); }
  bool operator==(const TrainConfig&) const = default;
};

/// Learning rate at a point in training. `iter_frac` ∈ [0,1) is the position
/// within `epoch`. Warm-up epochs use the constant base_lr·warmup_factor;
/// afterwards base_lr·(1 − t)^power with t the fraction of post-warm-up
/// iterations already done.
double lr_at(Index epoch, double iter_frac, const TrainConfig& cfg);

template <typename T>
struct OptimizerState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::int64_t step = 0;
};

/// Decoupled weight decay (p −= lr·wd·p) followed by a bias-corrected Adam
/// step. `params` are updated in place from their accumulated gradients;
/// parameters without a gradient are treated as having a zero gradient.
template <typename T>
void adamw_step(std::vector<BasicTensor<T>>& params, OptimizerState<T>& state, double lr, double weight_decay,
                double eps = 1e-8, std::pair<double, double> betas = {0.9, 0.999});

struct TrainRecord {
  Index epoch = 0;
  Index iter = 0;  // global iteration count, 1-based
  double lr = 0.0;
  double loss = 0.0;
  std::optional<double> val_miou;
};

struct TrainResult {
  std::vector<TrainRecord> log;
  std::optional<double> best_val_miou;
  Index best_epoch = -1;
  std::uint64_t steps = 0;
};

struct TrainOptions {
  /// Directory for `train_log.jsonl`, `last.ckpt` and `best.ckpt`; nothing is
  /// written when empty.
  std::filesystem::path out_dir;
  /// Progress sink (one line per epoch); silent when empty.
  std::function<void(const std::string&)> progress;
};

/// Evaluates at full input resolution on the upsampled-logit argmax.
ConfusionMatrix evaluate(const MmsFormer<float>& model, const Dataset& data);

/// Trains `model` on `train_set`; `val_set` may be empty (no validation).
/// Raises ArityError when the dataset modality count differs from the
/// model's, NumericError on a non-finite loss.
TrainResult train(MmsFormer<float>& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                  const TrainOptions& options = {});

}  // namespace mms
