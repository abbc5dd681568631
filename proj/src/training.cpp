// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmsformer/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "mmsformer/checkpoint.hpp"
#include "mmsformer/records.hpp"
#include "mmsformer/rng.hpp"

namespace mms {

template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, const LabelMap& labels, std::uint8_t ignore_index) {
  if (logits.rank() != 3 || logits.dim(1) != labels.height || logits.dim(2) != labels.width) {
    throw ShapeError("cross_entropy: logits " + to_string(logits.shape()) + " vs labels " +
                     std::to_string(labels.height) + "x" + std::to_string(labels.width));
  }
  const Index k = logits.dim(0);
  const Index hw = labels.height * labels.width;
  Index valid = 0;
  for (Index i = 0; i < hw; ++i) {
    const std::uint8_t t = labels.labels[static_cast<std::size_t>(i)];
    if (t == ignore_index) continue;
    if (t >= k) {
      throw DataError("cross_entropy: label " + std::to_string(t) + " at pixel (" + std::to_string(i / labels.width) +
                      ", " + std::to_string(i % labels.width) + ") is outside 0.." + std::to_string(k - 1));
    }
    ++valid;
  }

  const auto x = logits.data();
  // Softmax probabilities are kept for the backward pass.
  std::vector<T> prob(x.size(), T(0));
  double total = 0.0;
  for (Index i = 0; i < hw; ++i) {
    const std::uint8_t t = labels.labels[static_cast<std::size_t>(i)];
    if (t == ignore_index) continue;
    T mx = x[static_cast<std::size_t>(i)];
    for (Index c = 1; c < k; ++c) mx = std::max(mx, x[static_cast<std::size_t>(c * hw + i)]);
    T z = T(0);
    for (Index c = 0; c < k; ++c) {
      const T e = std::exp(x[static_cast<std::size_t>(c * hw + i)] - mx);
      prob[static_cast<std::size_t>(c * hw + i)] = e;
      z += e;
    }
    for (Index c = 0; c < k; ++c) prob[static_cast<std::size_t>(c * hw + i)] /= z;
    total += static_cast<double>(std::log(z) + mx - x[static_cast<std::size_t>(t * hw + i)]);
  }
  const T loss = valid > 0 ? static_cast<T>(total / static_cast<double>(valid)) : T(0);

  auto backward = [prob = std::move(prob), labels_copy = labels.labels, ignore_index, k, hw,
                   valid](detail::Node<T>& self) {
    T* g = input_grad(self, 0);
    if (!g || valid == 0) return;
    const T up = self.grad[0] / static_cast<T>(valid);
    for (Index i = 0; i < hw; ++i) {
      const std::uint8_t t = labels_copy[static_cast<std::size_t>(i)];
      if (t == ignore_index) continue;
      for (Index c = 0; c < k; ++c) {
        const std::size_t j = static_cast<std::size_t>(c * hw + i);
        g[j] += up * (prob[j] - (c == t ? T(1) : T(0)));
      }
    }
  };
  return make_result<T>({1}, {loss}, "cross_entropy", {logits}, std::move(backward));
}

void TrainConfig::validate() const {
  if (!(base_lr > 0.0)) throw ConfigError("train.base_lr must be positive");
  if (total_epochs < 1) throw ConfigError("train.total_epochs must be at least 1");
  if (warmup_epochs < 0 || warmup_epochs > total_epochs) {
    throw ConfigError("train.warmup_epochs must lie in 0..total_epochs");
  }
  if (!(warmup_factor > 0.0)) throw ConfigError("train.warmup_factor must be positive");
  if (!(poly_power > 0.0)) throw ConfigError("train.poly_power must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be non-negative");
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be positive");
  const auto [b1, b2] = adam_betas;
  if (!(b1 >= 0.0 && b1 < 1.0 && b2 >= 0.0 && b2 < 1.0)) throw ConfigError("train.adam_betas must lie in [0,1)");
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (eval_every < 1) throw ConfigError("train.eval_every must be at least 1");
}

KeyValues TrainConfig::to_key_values() const {
  KeyValues kv;
  kv.set("train.base_lr", format_real(base_lr));
  kv.set("train.total_epochs", std::to_string(total_epochs));
  kv.set("train.warmup_epochs", std::to_string(warmup_epochs));
  kv.set("train.warmup_factor", format_real(warmup_factor));
  kv.set("train.poly_power", format_real(poly_power));
  kv.set("train.weight_decay", format_real(weight_decay));
  kv.set("train.adam_eps", format_real(adam_eps));
  kv.set("train.adam_betas", format_real(adam_betas.first) + "," + format_real(adam_betas.second));
  kv.set("train.batch_size", std::to_string(batch_size));
  kv.set("train.seed", std::to_string(seed));
  kv.set("train.eval_every", std::to_string(eval_every));
  return kv;
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv, TrainConfig c) {
  for (const auto& [key, value] : kv.entries()) {
    if (key.rfind("train.", 0) != 0) continue;
    const std::string k = key.substr(6);
    if (k == "base_lr") {
      c.base_lr = parse_real(key, value);
    } else if (k == "total_epochs") {
      c.total_epochs = parse_int(key, value);
    } else if (k == "warmup_epochs") {
      c.warmup_epochs = parse_int(key, value);
    } else if (k == "warmup_factor") {
      c.warmup_factor = parse_real(key, value);
    } else if (k == "poly_power") {
      c.poly_power = parse_real(key, value);
    } else if (k == "weight_decay") {
      c.weight_decay = parse_real(key, value);
    } else if (k == "adam_eps") {
      c.adam_eps = parse_real(key, value);
    } else if (k == "adam_betas") {
      const auto parts = split_list(value);
      if (parts.size() != 2) throw ConfigError(key + ": expected two comma-separated values");
      c.adam_betas = {parse_real(key, parts[0]), parse_real(key, parts[1])};
    } else if (k == "batch_size") {
      c.batch_size = parse_int(key, value);
    } else if (k == "seed") {
      c.seed = static_cast<std::uint64_t>(parse_int(key, value));
    } else if (k == "eval_every") {
      c.eval_every = parse_int(key, value);
    } else {
      throw ConfigError("unknown config key " + key);
    }
  }
  return c;
}

double lr_at(Index epoch, double iter_frac, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.total_epochs) {
    throw ContractError("lr_at: epoch " + std::to_string(epoch) + " outside 0.." + std::to_string(cfg.total_epochs - 1));
  }
  if (!(iter_frac >= 0.0 && iter_frac < 1.0)) throw ContractError("lr_at: iter_frac must lie in [0,1)");
  if (epoch < cfg.warmup_epochs) return cfg.base_lr * cfg.warmup_factor;
  const double t = (static_cast<double>(epoch - cfg.warmup_epochs) + iter_frac) /
                   static_cast<double>(cfg.total_epochs - cfg.warmup_epochs);
  return cfg.base_lr * std::pow(1.0 - t, cfg.poly_power);
}

template <typename T>
void adamw_step(std::vector<BasicTensor<T>>& params, OptimizerState<T>& state, double lr, double weight_decay,
                double eps, std::pair<double, double> betas) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(static_cast<std::size_t>(p.numel()), T(0));
      state.v.emplace_back(static_cast<std::size_t>(p.numel()), T(0));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adamw_step: optimizer state does not match parameters");
  ++state.step;
  const T b1 = static_cast<T>(betas.first);
  const T b2 = static_cast<T>(betas.second);
  const T bc1 = T(1) - static_cast<T>(std::pow(betas.first, static_cast<double>(state.step)));
  const T bc2 = T(1) - static_cast<T>(std::pow(betas.second, static_cast<double>(state.step)));
  const T step = static_cast<T>(lr) / bc1;
  const T decay = static_cast<T>(lr * weight_decay);
  const T e = static_cast<T>(eps);
  const T root_bc2 = std::sqrt(bc2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    const auto g = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != w.size()) throw ShapeError("adamw_step: moment shape mismatch for parameter " + std::to_string(i));
    const bool has_grad = g.size() == w.size();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const T gj = has_grad ? g[j] : T(0);
      w[j] -= decay * w[j];
      m[j] = b1 * m[j] + (T(1) - b1) * gj;
      v[j] = b2 * v[j] + (T(1) - b2) * gj * gj;
      w[j] -= step * m[j] / (std::sqrt(v[j]) / root_bc2 + e);
    }
  }
}

ConfusionMatrix evaluate(const MmsFormer<float>& model, const Dataset& data) {
  ConfusionMatrix cm(model.config().decoder.num_classes);
  NoGradGuard no_grad;
  for (const auto& s : data.samples) cm.accumulate(predict_labels(model.forward(s.images)), s.labels);
  return cm;
}

namespace {

Json record_json(const TrainRecord& r) {
  Json j;
  j["epoch"] = r.epoch;
  j["iter"] = r.iter;
  j["lr"] = r.lr;
  j["loss"] = r.loss;
  j["val_miou"] = r.val_miou ? Json(*r.val_miou) : Json(nullptr);
  return j;
}

void check_dataset(const MmsFormer<float>& model, const Dataset& d, const char* which) {
  if (d.empty()) return;
  if (d.num_modalities() != model.config().num_modalities) {
    throw ArityError(std::string(which) + " set has " + std::to_string(d.num_modalities()) +
                     " modalities, model expects " + std::to_string(model.config().num_modalities));
  }
  if (d.num_classes() != model.config().decoder.num_classes) {
    throw ConfigError(std::string(which) + " set has " + std::to_string(d.num_classes()) + " classes, model has " +
                      std::to_string(model.config().decoder.num_classes));
  }
}

}  // namespace

TrainResult train(MmsFormer<float>& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                  const TrainOptions& options) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");
  check_dataset(model, train_set, "training");
  check_dataset(model, val_set, "validation");

  const Index n = static_cast<Index>(train_set.samples.size());
  const Index iters = (n + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(cfg.seed);
  auto params = model.parameters().tensors();
  OptimizerState<float> state;
  TrainResult result;
  const bool write = !options.out_dir.empty();

  for (Index epoch = 0; epoch < cfg.total_epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (Index it = 0; it < iters; ++it) {
      const double lr = lr_at(epoch, static_cast<double>(it) / static_cast<double>(iters), cfg);
      model.parameters().zero_grad();
      const Index begin = it * cfg.batch_size;
      const Index end = std::min(n, begin + cfg.batch_size);
      const float inv = 1.0f / static_cast<float>(end - begin);
      double batch_loss = 0.0;
      for (Index b = begin; b < end; ++b) {
        const Sample& s = train_set.samples[order[static_cast<std::size_t>(b)]];
        const auto loss = cross_entropy(model.forward(s.images), s.labels);
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", sample " + s.id);
        }
        batch_loss += value;
        ops::scale(loss, inv).backward();
      }
      adamw_step(params, state, lr, cfg.weight_decay, cfg.adam_eps, cfg.adam_betas);
      ++result.steps;
      batch_loss /= static_cast<double>(end - begin);
      epoch_loss += batch_loss;
      result.log.push_back({epoch, static_cast<Index>(result.steps), lr, batch_loss, std::nullopt});
    }

    const bool last = epoch + 1 == cfg.total_epochs;
    if (!val_set.empty() && ((epoch + 1) % cfg.eval_every == 0 || last)) {
      const double score = miou(evaluate(model, val_set));
      result.log.back().val_miou = score;
      if (!result.best_val_miou || score > *result.best_val_miou) {
        result.best_val_miou = score;
        result.best_epoch = epoch;
        if (write) save_checkpoint(options.out_dir / "best.ckpt", model, result.steps);
      }
    }
    if (options.progress) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "epoch %lld/%lld loss %.5f lr %.3g", static_cast<long long>(epoch + 1),
                    static_cast<long long>(cfg.total_epochs), epoch_loss / static_cast<double>(iters),
                    result.log.back().lr);
      std::string line = buf;
      if (result.log.back().val_miou) {
        std::snprintf(buf, sizeof buf, " val_mIoU %.4f", *result.log.back().val_miou);
        line += buf;
      }
      options.progress(line);
    }
  }

  if (write) {
    std::vector<Json> records;
    for (const auto& r : result.log) records.push_back(record_json(r));
    write_jsonl(options.out_dir / "train_log.jsonl", records);
    save_checkpoint(options.out_dir / "last.ckpt", model, result.steps);
  }
  return result;
}

template BasicTensor<float> cross_entropy(const BasicTensor<float>&, const LabelMap&, std::uint8_t);
template BasicTensor<double> cross_entropy(const BasicTensor<double>&, const LabelMap&, std::uint8_t);
template void adamw_step(std::vector<BasicTensor<float>>&, OptimizerState<float>&, double, double, double,
                         std::pair<double, double>);
template void adamw_step(std::vector<BasicTensor<double>>&, OptimizerState<double>&, double, double, double,
                         std::pair<double, double>);

}  // namespace mms
