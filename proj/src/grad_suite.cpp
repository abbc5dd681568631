// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmsformer/grad_suite.hpp"

#include <cstdio>
#include <functional>

#include "mmsformer/grad_check.hpp"
#include "mmsformer/model.hpp"
#include "mmsformer/training.hpp"

namespace mms {

namespace {

template <typename T>
BasicTensor<T> random_leaf(Rng& rng, Shape shape, double scale = 1.0, double offset = 0.0) {
  std::vector<T> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = static_cast<T>(offset + scale * rng.uniform(-1.0, 1.0));
  return BasicTensor<T>::from(std::move(shape), std::move(v), true);
}

// Values bounded away from zero, for ops with a kink there.
template <typename T>
BasicTensor<T> off_zero_leaf(Rng& rng, Shape shape) {
  std::vector<T> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = static_cast<T>((rng.below(2) ? 1.0 : -1.0) * rng.uniform(0.2, 1.0));
  return BasicTensor<T>::from(std::move(shape), std::move(v), true);
}

// Scalar probe Σ out ⊙ w with fixed random w, so every output coordinate
// carries a distinct weight.
template <typename T>
BasicTensor<T> probe(const BasicTensor<T>& out, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<T> w(static_cast<std::size_t>(out.numel()));
  for (auto& x : w) x = static_cast<T>(rng.uniform(-1.0, 1.0));
  return ops::sum(ops::mul(out, BasicTensor<T>::from(out.shape(), std::move(w))));
}

template <typename T>
struct Case {
  std::function<BasicTensor<T>()> f;
  std::vector<BasicTensor<T>> leaves;
  Index max_coords = 0;
};

// Each builder is instantiated for float and double with identical draws.
using Builder32 = std::function<Case<float>(std::uint64_t)>;
using Builder64 = std::function<Case<double>(std::uint64_t)>;

struct Entry {
  std::string name;
  Builder32 f32;
  Builder64 f64;
};

#define MMS_CASE(NAME, ...)                                                \
  Entry {                                                                  \
    NAME, [](std::uint64_t seed) { using T = float; __VA_ARGS__ },         \
        [](std::uint64_t seed) { using T = double; __VA_ARGS__ }           \
  }

template <typename T>
ModelConfig tiny_config(Index modalities, Variant variant) {
  ModelConfig c = ModelConfig::desk();
  const Index channels[] = {4, 8, 8, 8};
  const Index heads[] = {1, 2, 1, 2};
  const Index ratios[] = {4, 2, 1, 1};
  for (std::size_t i = 0; i < kNumStages; ++i) {
    c.encoder.stages[i].channels = channels[i];
    c.encoder.stages[i].heads = heads[i];
    c.encoder.stages[i].reduction_ratio = ratios[i];
    c.encoder.stages[i].ffn_expansion = 2;
  }
  c.fusion.se_reduction = 4;
  c.decoder.embed_dim = 8;
  c.decoder.num_classes = 3;
  c.num_modalities = modalities;
  c.variant = variant;
  c.seed = 11;
  return c;
}

template <typename T>
Case<T> fusion_case(std::uint64_t seed, Variant variant) {
  Rng rng(seed);
  ModelConfig cfg = tiny_config<T>(2, variant);
  auto params = std::make_shared<ParameterSet<T>>();
  Rng init(5);
  FusionBlock<T> block(ParamScope<T>(*params, init, "fusion"), 6, 2, cfg.resolved_fusion());
  // Randomize every weight so the SE and conv paths carry real signal.
  for (const auto& p : params->items()) {
    auto v = BasicTensor<T>(p.tensor).mutable_data();
    for (auto& x : v) x = static_cast<T>(0.5 * rng.uniform(-1.0, 1.0));
  }
  auto a = random_leaf<T>(rng, {6, 5, 5});
  auto b = random_leaf<T>(rng, {6, 5, 5});
  auto leaves = params->tensors();
  leaves.push_back(a);
  leaves.push_back(b);
  return {[=] { return probe(block({a, b}), seed + 1); }, leaves, 0};
}

std::vector<Entry> entries() {
  std::vector<Entry> out;
  out.push_back(MMS_CASE("add", Rng r(seed); auto a = random_leaf<T>(r, {3, 4}); auto b = random_leaf<T>(r, {3, 4});
                         return Case<T>{[=] { return probe(ops::add(a, b), seed); }, {a, b}};));
  out.push_back(MMS_CASE("sub", Rng r(seed); auto a = random_leaf<T>(r, {3, 4}); auto b = random_leaf<T>(r, {3, 4});
                         return Case<T>{[=] { return probe(ops::sub(a, b), seed); }, {a, b}};));
  out.push_back(MMS_CASE("mul", Rng r(seed); auto a = random_leaf<T>(r, {3, 4}); auto b = random_leaf<T>(r, {3, 4});
                         return Case<T>{[=] { return probe(ops::mul(a, b), seed); }, {a, b}};));
  out.push_back(MMS_CASE("scale", Rng r(seed); auto a = random_leaf<T>(r, {5});
                         return Case<T>{[=] { return probe(ops::scale(a, T(-1.7)), seed); }, {a}};));
  out.push_back(MMS_CASE("add_scalar", Rng r(seed); auto a = random_leaf<T>(r, {5});
                         return Case<T>{[=] { return probe(ops::add_scalar(a, T(0.3)), seed); }, {a}};));
  out.push_back(MMS_CASE("relu", Rng r(seed); auto a = off_zero_leaf<T>(r, {4, 4});
                         return Case<T>{[=] { return probe(ops::relu(a), seed); }, {a}};));
  out.push_back(MMS_CASE("sigmoid", Rng r(seed); auto a = random_leaf<T>(r, {4, 4}, 3.0);
                         return Case<T>{[=] { return probe(ops::sigmoid(a), seed); }, {a}};));
  out.push_back(MMS_CASE("square", Rng r(seed); auto a = random_leaf<T>(r, {6});
                         return Case<T>{[=] { return probe(ops::square(a), seed); }, {a}};));
  out.push_back(MMS_CASE("gelu", Rng r(seed); auto a = random_leaf<T>(r, {4, 4}, 3.0);
                         return Case<T>{[=] { return probe(ops::gelu(a), seed); }, {a}};));
  out.push_back(MMS_CASE("sum", Rng r(seed); auto a = random_leaf<T>(r, {3, 3});
                         return Case<T>{[=] { return ops::sum(a); }, {a}};));
  out.push_back(MMS_CASE("mean", Rng r(seed); auto a = random_leaf<T>(r, {3, 3});
                         return Case<T>{[=] { return ops::mean(a); }, {a}};));
  out.push_back(MMS_CASE("reshape", Rng r(seed); auto a = random_leaf<T>(r, {2, 6});
                         return Case<T>{[=] { return probe(ops::reshape(a, {3, 4}), seed); }, {a}};));
  out.push_back(MMS_CASE("transpose", Rng r(seed); auto a = random_leaf<T>(r, {2, 5});
                         return Case<T>{[=] { return probe(ops::transpose(a), seed); }, {a}};));
  out.push_back(MMS_CASE("concat", Rng r(seed); auto a = random_leaf<T>(r, {2, 3, 2}); auto b = random_leaf<T>(r, {2, 1, 2});
                         return Case<T>{[=] { return probe(ops::concat<T>({a, b}, 1), seed); }, {a, b}};));
  out.push_back(MMS_CASE("add_n", Rng r(seed); auto a = random_leaf<T>(r, {2, 3}); auto b = random_leaf<T>(r, {2, 3});
                         auto c = random_leaf<T>(r, {2, 3});
                         return Case<T>{[=] { return probe(ops::add_n<T>({a, b, c}), seed); }, {a, b, c}};));
  out.push_back(MMS_CASE("narrow", Rng r(seed); auto a = random_leaf<T>(r, {4, 6});
                         return Case<T>{[=] { return probe(ops::narrow(a, 1, 2, 3), seed); }, {a}};));
  out.push_back(MMS_CASE("map_to_tokens", Rng r(seed); auto a = random_leaf<T>(r, {3, 2, 4});
                         return Case<T>{[=] { return probe(ops::map_to_tokens(a), seed); }, {a}};));
  out.push_back(MMS_CASE("tokens_to_map", Rng r(seed); auto a = random_leaf<T>(r, {8, 3});
                         return Case<T>{[=] { return probe(ops::tokens_to_map(a, 2, 4), seed); }, {a}};));
  out.push_back(MMS_CASE("matmul", Rng r(seed); auto a = random_leaf<T>(r, {3, 4}); auto b = random_leaf<T>(r, {4, 5});
                         return Case<T>{[=] { return probe(ops::matmul(a, b), seed); }, {a, b}};));
  out.push_back(MMS_CASE("linear", Rng r(seed); auto x = random_leaf<T>(r, {5, 4}); auto w = random_leaf<T>(r, {3, 4});
                         auto b = random_leaf<T>(r, {3});
                         return Case<T>{[=] { return probe(ops::linear<T>(x, w, b), seed); }, {x, w, b}};));
  out.push_back(MMS_CASE("pointwise", Rng r(seed); auto x = random_leaf<T>(r, {4, 3, 3}); auto w = random_leaf<T>(r, {2, 4});
                         auto b = random_leaf<T>(r, {2});
                         return Case<T>{[=] { return probe(ops::pointwise<T>(x, w, b), seed); }, {x, w, b}};));
  out.push_back(MMS_CASE("conv2d", Rng r(seed); auto x = random_leaf<T>(r, {4, 7, 6}); auto w = random_leaf<T>(r, {6, 2, 3, 3});
                         auto b = random_leaf<T>(r, {6});
                         return Case<T>{[=] {
                           return probe(ops::conv2d<T>(x, w, b, {.stride = 2, .pad = 1, .groups = 2}), seed);
                         }, {x, w, b}};));
  out.push_back(MMS_CASE("conv2d_depthwise", Rng r(seed); auto x = random_leaf<T>(r, {3, 6, 6});
                         auto w = random_leaf<T>(r, {3, 1, 5, 5}); auto b = random_leaf<T>(r, {3});
                         return Case<T>{[=] {
                           return probe(ops::conv2d<T>(x, w, b, {.stride = 1, .pad = 2, .groups = 3}), seed);
                         }, {x, w, b}};));
  out.push_back(MMS_CASE("softmax", Rng r(seed); auto a = random_leaf<T>(r, {3, 5}, 2.0);
                         return Case<T>{[=] { return probe(ops::add(ops::softmax(a, 1), ops::softmax(a, 0)), seed); },
                                        {a}};));
  out.push_back(MMS_CASE("layer_norm", Rng r(seed); auto x = random_leaf<T>(r, {4, 6}); auto g = random_leaf<T>(r, {6}, 0.5, 1.0);
                         auto b = random_leaf<T>(r, {6});
                         return Case<T>{[=] { return probe(ops::layer_norm(x, g, b, T(1e-6)), seed); }, {x, g, b}};));
  out.push_back(MMS_CASE("bilinear_upsample", Rng r(seed); auto a = random_leaf<T>(r, {2, 3, 4});
                         return Case<T>{[=] { return probe(ops::bilinear_upsample(a, 7, 8), seed); }, {a}};));
  out.push_back(MMS_CASE("global_avg_pool", Rng r(seed); auto a = random_leaf<T>(r, {3, 4, 2});
                         return Case<T>{[=] { return probe(ops::global_avg_pool(a), seed); }, {a}};));
  out.push_back(MMS_CASE("scale_channels", Rng r(seed); auto a = random_leaf<T>(r, {3, 2, 2}); auto g = random_leaf<T>(r, {3});
                         return Case<T>{[=] { return probe(ops::scale_channels(a, g), seed); }, {a, g}};));
  out.push_back(MMS_CASE("cross_entropy", Rng r(seed); auto a = random_leaf<T>(r, {4, 3, 3}, 2.0); LabelMap l(3, 3);
                         for (auto& v : l.labels) v = static_cast<std::uint8_t>(r.below(4));
                         l.labels[4] = kIgnoreIndex;
                         return Case<T>{[=] { return cross_entropy(a, l); }, {a}};));
  out.push_back(MMS_CASE("efficient_attention", Rng r(seed); ParameterSet<T> ps; Rng init(3);
                         StageConfig sc; sc.channels = 4; sc.heads = 2; sc.reduction_ratio = 2;
                         EfficientAttention<T> attn(ParamScope<T>(ps, init, "attn"), sc);
                         for (const auto& p : ps.items()) {
                           auto v = BasicTensor<T>(p.tensor).mutable_data();
                           for (auto& x : v) x = static_cast<T>(0.5 * r.uniform(-1.0, 1.0));
                         }
                         auto x = random_leaf<T>(r, {8, 4}); auto leaves = ps.tensors(); leaves.push_back(x);
                         return Case<T>{[=] { return probe(attn(x, nullptr), seed); }, leaves};));
  out.push_back(MMS_CASE("mix_ffn", Rng r(seed); ParameterSet<T> ps; Rng init(3);
                         MixFfn<T> ffn(ParamScope<T>(ps, init, "ffn"), 3, 2);
                         for (const auto& p : ps.items()) {
                           auto v = BasicTensor<T>(p.tensor).mutable_data();
                           for (auto& x : v) x = static_cast<T>(0.5 * r.uniform(-1.0, 1.0));
                         }
                         auto x = random_leaf<T>(r, {12, 3}); auto leaves = ps.tensors(); leaves.push_back(x);
                         return Case<T>{[=] { return probe(ffn(x, 3, 4), seed); }, leaves};));
  out.push_back(MMS_CASE("encoder_block", Rng r(seed); ParameterSet<T> ps; Rng init(3);
                         StageConfig sc; sc.channels = 4; sc.heads = 2; sc.reduction_ratio = 4; sc.ffn_expansion = 2;
                         MitBlock<T> block(ParamScope<T>(ps, init, "block"), sc);
                         for (const auto& p : ps.items()) {
                           auto v = BasicTensor<T>(p.tensor).mutable_data();
                           for (auto& x : v) x += static_cast<T>(0.3 * r.uniform(-1.0, 1.0));
                         }
                         auto x = random_leaf<T>(r, {16, 4}); auto leaves = ps.tensors(); leaves.push_back(x);
                         return Case<T>{[=] { return probe(block(x, 4, 4, nullptr), seed); }, leaves};));
  for (const Variant v : kAllVariants) {
    out.push_back(Entry{"fusion_block/" + to_string(v), [v](std::uint64_t s) { return fusion_case<float>(s, v); },
                        [v](std::uint64_t s) { return fusion_case<double>(s, v); }});
  }
  out.push_back(MMS_CASE("encoder", Rng r(seed); auto model = std::make_shared<MmsFormer<T>>(tiny_config<T>(1, Variant::full));
                         auto x = random_leaf<T>(r, {3, 32, 32}); auto leaves = model->parameters().tensors();
                         leaves.push_back(x);
                         return Case<T>{[=] {
                           const auto p = model->encoders[0].encode(x);
                           return ops::add(ops::add(probe(p[0], seed), probe(p[1], seed + 1)),
                                           ops::add(probe(p[2], seed + 2), probe(p[3], seed + 3)));
                         }, leaves, 3};));
  out.push_back(MMS_CASE("decoder", Rng r(seed); ParameterSet<T> ps; Rng init(3); DecoderConfig dc; dc.embed_dim = 4;
                         dc.num_classes = 3; MlpDecoder<T> dec(ParamScope<T>(ps, init, "decoder"), {2, 3, 3, 4}, dc);
                         FeaturePyramid<T> pyr{random_leaf<T>(r, {2, 8, 8}), random_leaf<T>(r, {3, 4, 4}),
                                               random_leaf<T>(r, {3, 2, 2}), random_leaf<T>(r, {4, 1, 1})};
                         auto leaves = ps.tensors(); for (const auto& t : pyr) leaves.push_back(t);
                         return Case<T>{[=] { return probe(dec(pyr), seed); }, leaves};));
  out.push_back(MMS_CASE("full_model_loss", Rng r(seed);
                         auto model = std::make_shared<MmsFormer<T>>(tiny_config<T>(2, Variant::full));
                         auto a = random_leaf<T>(r, {3, 32, 32}); auto b = random_leaf<T>(r, {3, 32, 32});
                         LabelMap l(32, 32);
                         for (auto& v : l.labels) v = static_cast<std::uint8_t>(r.below(3));
                         for (Index x = 0; x < 32; ++x) l.at(0, x) = kIgnoreIndex;
                         return Case<T>{[=] { return cross_entropy(model->forward({a, b}), l); },
                                        model->parameters().tensors(), 2};));
  return out;
}

#undef MMS_CASE

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed) {
  std::vector<GradSuiteEntry> out;
  std::uint64_t case_seed = seed;
  for (const auto& e : entries()) {
    ++case_seed;
    GradSuiteEntry r;
    r.name = e.name;
    const Case<float> c32 = e.f32(case_seed);
    const auto rep32 = grad_check_leaves<float>(c32.f, c32.leaves, 1e-2f, c32.max_coords);
    const Case<double> c64 = e.f64(case_seed);
    const auto rep64 = grad_check_leaves<double>(c64.f, c64.leaves, 1e-6, c64.max_coords);
    r.error32 = rep32.max_rel_error;
    r.error64 = rep64.max_rel_error;
    r.coordinates = rep64.coordinates_checked;
    out.push_back(r);
  }
  return out;
}

std::string format_gradient_suite(const std::vector<GradSuiteEntry>& entries) {
  std::string out;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-34s %12s %12s %8s  %s\n", "case", "err 32-bit", "err 64-bit", "coords", "result");
  out += buf;
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%-34s %12.3e %12.3e %8lld  %s\n", e.name.c_str(), e.error32, e.error64,
                  e.coordinates, e.passed() ? "ok" : "FAIL");
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "tolerances: %.0e (32-bit), %.0e (64-bit)\n", kGradTolerance32, kGradTolerance64);
  out += buf;
  return out;
}

}  // namespace mms
