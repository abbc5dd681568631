// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmsformer/cost_model.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <functional>
#include <tuple>

#include "mmsformer/ops.hpp"

namespace mms {

namespace {

using I64 = std::int64_t;

CostNode leaf(std::string name, I64 params, I64 macs, I64 bias_adds) {
  return CostNode{std::move(name), params, macs, 2 * macs + bias_adds, {}};
}

// Linear in→out applied to `tokens` positions (tokens = 0 when uncosted).
CostNode linear(std::string name, I64 in, I64 out, I64 tokens) {
  return leaf(std::move(name), in * out + out, tokens * in * out, tokens * out);
}

CostNode conv(std::string name, I64 in, I64 out, I64 k, I64 groups, I64 out_pixels) {
  return leaf(std::move(name), (in / groups) * k * k * out + out, out_pixels * out * (in / groups) * k * k,
              out_pixels * out);
}

CostNode norm(std::string name, I64 channels) { return leaf(std::move(name), 2 * channels, 0, 0); }

CostNode& total(CostNode& node) {
  for (auto& c : node.children) {
    total(c);
    node.params += c.params;
    node.macs += c.macs;
    node.flops += c.flops;
  }
  return node;
}

CostNode group(std::string name, std::vector<CostNode> children) {
  return CostNode{std::move(name), 0, 0, 0, std::move(children)};
}

CostNode encoder_cost(const std::string& name, const EncoderConfig& enc, I64 h, I64 w) {
  CostNode root = group(name, {});
  I64 in = enc.in_channels;
  for (std::size_t i = 0; i < kNumStages; ++i) {
    const auto& s = enc.stages[i];
    const I64 c = s.channels;
    if (h > 0) {
      h = ops::conv_output_extent(h, s.patch_kernel, s.patch_stride, s.patch_pad);
      w = ops::conv_output_extent(w, s.patch_kernel, s.patch_stride, s.patch_pad);
    }
    const I64 n = h * w;
    const I64 r = s.reduction_ratio;
    const I64 nr = r > 1 ? n / r : n;
    CostNode stage = group("stage" + std::to_string(i + 1), {});
    stage.children.push_back(conv("patch", in, c, s.patch_kernel, 1, n));
    stage.children.push_back(norm("patch_norm", c));
    for (I64 b = 0; b < s.depth; ++b) {
      CostNode attn = group("attn", {});
      attn.children.push_back(linear("wq", c, c, n));
      attn.children.push_back(linear("wk", c, c, nr));
      attn.children.push_back(linear("wv", c, c, nr));
      if (r > 1) {
        attn.children.push_back(linear("sr", c * r, c, nr));
        attn.children.push_back(norm("sr_norm", c));
      }
      attn.children.push_back(leaf("scores", 0, n * nr * c, 0));
      attn.children.push_back(leaf("mix", 0, n * nr * c, 0));
      attn.children.push_back(linear("wo", c, c, n));
      const I64 hidden = c * s.ffn_expansion;
      CostNode ffn = group("ffn", {linear("fc1", c, hidden, n), conv("dwconv", hidden, hidden, 3, hidden, n),
                                   linear("fc2", hidden, c, n)});
      stage.children.push_back(group("block" + std::to_string(b + 1),
                                     {norm("norm1", c), std::move(attn), norm("norm2", c), std::move(ffn)}));
    }
    stage.children.push_back(norm("norm", c));
    root.children.push_back(std::move(stage));
    in = c;
  }
  return root;
}

CostNode fusion_cost(const std::string& name, I64 c, I64 m, const FusionConfig& f, I64 pixels) {
  CostNode block = group(name, {linear("linear_fuse", m * c, c, pixels)});
  if (f.linear_only) return block;
  block.children.push_back(linear("proj_in", c, c, pixels));
  if (f.enable_parallel_convs) {
    const I64 groups = f.conv_grouping == ConvGrouping::depthwise ? c : 1;
    for (const I64 k : f.kernel_sizes) block.children.push_back(conv("conv" + std::to_string(k), c, c, k, groups, pixels));
  }
  block.children.push_back(linear("proj_out", c, c, pixels));
  if (f.enable_channel_attention) {
    const I64 hidden = f.se_hidden(c);
    const I64 once = pixels > 0 ? 1 : 0;
    block.children.push_back(group("se", {linear("fc1", c, hidden, once), linear("fc2", hidden, c, once)}));
  }
  return block;
}

CostReport build(const ModelConfig& config, I64 h, I64 w) {
  config.validate();
  const FusionConfig f = config.resolved_fusion();
  CostReport report;
  report.config = config;
  report.height = h;
  report.width = w;
  report.root.name = "model";

  CostNode encoders = group("encoder", {});
  for (Index m = 0; m < config.num_modalities; ++m) {
    encoders.children.push_back(encoder_cost(std::to_string(m), config.encoder, h, w));
  }

  CostNode fusion = group("fusion", {});
  std::array<I64, kNumStages> pixels{};
  for (std::size_t i = 0; i < kNumStages; ++i) {
    const I64 stride = config.encoder.stage_stride(i);
    pixels[i] = h > 0 ? (h / stride) * (w / stride) : 0;
    fusion.children.push_back(fusion_cost(std::to_string(i + 1), config.encoder.stages[i].channels,
                                          config.num_modalities, f, pixels[i]));
  }

  const I64 d = config.decoder.embed_dim;
  CostNode decoder = group("decoder", {});
  for (std::size_t i = 0; i < kNumStages; ++i) {
    decoder.children.push_back(
        linear("level" + std::to_string(i + 1), config.encoder.stages[i].channels, d, pixels[i]));
  }
  decoder.children.push_back(linear("fuse", kNumStages * d, d, pixels[0]));
  decoder.children.push_back(linear("classifier", d, config.decoder.num_classes, pixels[0]));

  report.root.children = {std::move(encoders), std::move(fusion), std::move(decoder)};
  total(report.root);
  return report;
}

void walk(const CostNode& node, const std::string& prefix, int depth,
          const std::function<void(const CostNode&, const std::string&, int)>& visit) {
  const std::string path = prefix.empty() ? node.name : prefix + "." + node.name;
  visit(node, path, depth);
  for (const auto& c : node.children) walk(c, path, depth + 1, visit);
}

std::string gflops_text(I64 flops) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", static_cast<double>(flops) / 1e9);
  return buf;
}

}  // namespace

const CostNode* CostNode::find(const std::string& path) const {
  const CostNode* node = this;
  std::size_t start = 0;
  while (start <= path.size()) {
    const std::size_t dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    const CostNode* next = nullptr;
    for (const auto& c : node->children) {
      if (c.name == part) next = &c;
    }
    if (!next) return nullptr;
    node = next;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return node;
}

const CostNode& CostReport::encoders() const { return root.children[0]; }
const CostNode& CostReport::fusion() const { return root.children[1]; }
const CostNode& CostReport::decoder() const { return root.children[2]; }

std::string CostReport::to_text(int max_depth) const {
  std::vector<std::tuple<std::string, I64, I64>> rows;
  std::size_t width = 6;
  walk(root, "", 0, [&](const CostNode& n, const std::string&, int depth) {
    if (max_depth >= 0 && depth > max_depth) return;
    rows.emplace_back(std::string(2 * static_cast<std::size_t>(depth), ' ') + n.name, n.params, n.flops);
    width = std::max(width, std::get<0>(rows.back()).size());
  });
  std::string out;
  char buf[256];
  if (height > 0) {
    std::snprintf(buf, sizeof buf, "input %lldx%lld per modality, %lld modalities\n", static_cast<long long>(height),
                  static_cast<long long>(width), static_cast<long long>(config.num_modalities));
  } else {
    std::snprintf(buf, sizeof buf, "parameters only, %lld modalities\n", static_cast<long long>(config.num_modalities));
  }
  out += buf;
  out += "FLOPs: 2 per multiply-accumulate plus bias adds; norms, activations, softmax, pooling, resampling and "
         "residual adds not counted\n";
  std::snprintf(buf, sizeof buf, "%-*s %14s %10s\n", static_cast<int>(width), "module", "params", "GFLOPs");
  out += buf;
  for (const auto& [name, params, flops] : rows) {
    std::snprintf(buf, sizeof buf, "%-*s %14lld %10s\n", static_cast<int>(width), name.c_str(),
                  static_cast<long long>(params), height > 0 ? gflops_text(flops).c_str() : "-");
    out += buf;
  }
  return out;
}

std::vector<Json> CostReport::to_records() const {
  std::vector<Json> out;
  walk(root, "", 0, [&](const CostNode& n, const std::string& path, int depth) {
    Json j;
    j["path"] = path;
    j["depth"] = depth;
    j["params"] = n.params;
    j["macs"] = n.macs;
    j["flops"] = n.flops;
    j["gflops"] = static_cast<double>(n.flops) / 1e9;
    out.push_back(std::move(j));
  });
  return out;
}

CostReport count_params(const ModelConfig& config) { return build(config, 0, 0); }

CostReport count_flops(const ModelConfig& config, Index height, Index width) {
  const Index multiple = config.input_multiple();
  if (height <= 0 || width <= 0 || height % multiple != 0 || width % multiple != 0) {
    throw ConfigError("count_flops: input " + std::to_string(height) + "x" + std::to_string(width) +
                      " must be a positive multiple of " + std::to_string(multiple));
  }
  return build(config, height, width);
}

FusionCostComparison compare_fusion_with_paper(const ModelConfig& config, Index height, Index width) {
  const CostReport r = count_flops(config, height, width);
  const FusionConfig f = config.resolved_fusion();
  FusionCostComparison c;
  c.params_m = static_cast<double>(r.fusion().params) / 1e6;
  c.gflops = static_cast<double>(r.fusion().flops) / 1e9;
  c.gmacs = static_cast<double>(r.fusion().macs) / 1e9;
  c.params_deviation = (c.params_m - kPaperFusionParamsM) / kPaperFusionParamsM;
  c.gflops_deviation = (c.gflops - kPaperFusionGflops) / kPaperFusionGflops;
  c.gmacs_deviation = (c.gmacs - kPaperFusionGflops) / kPaperFusionGflops;
  std::string kernels;
  for (std::size_t i = 0; i < f.kernel_sizes.size(); ++i) kernels += (i ? "," : "") + std::to_string(f.kernel_sizes[i]);
  c.assumptions = "M=" + std::to_string(config.num_modalities) + ", input " + std::to_string(height) + "x" +
                  std::to_string(width) + ", channels " + std::to_string(config.encoder.stages[0].channels) + "/" +
                  std::to_string(config.encoder.stages[1].channels) + "/" +
                  std::to_string(config.encoder.stages[2].channels) + "/" +
                  std::to_string(config.encoder.stages[3].channels) + ", " + to_string(f.conv_grouping) +
                  " kernels " + kernels + ", SE r=" + std::to_string(f.se_reduction) + ", biases on";
  return c;
}

FusionCostComparison compare_fusion_with_paper() {
  ModelConfig c = ModelConfig::full_scale();
  c.num_modalities = 4;
  return compare_fusion_with_paper(c);
}

std::string FusionCostComparison::to_text() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "fusion blocks (%s)\n"
                "  params  %8.3f M   published %.2f M   deviation %+.1f%%\n"
                "  GFLOPs  %8.3f     published %.2f     deviation %+.1f%%  (2 FLOPs per MAC)\n"
                "  GMACs   %8.3f     published %.2f     deviation %+.1f%%  (if the published figure counts MACs)\n",
                assumptions.c_str(), params_m, kPaperFusionParamsM, 100.0 * params_deviation, gflops,
                kPaperFusionGflops, 100.0 * gflops_deviation, gmacs, kPaperFusionGflops, 100.0 * gmacs_deviation);
  return buf;
}

}  // namespace mms
