// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmsformer/config.hpp"

#include <algorithm>

#include "mmsformer/error.hpp"

namespace mms {

Index EncoderConfig::stage_stride(std::size_t stage) const {
  Index stride = 1;
  for (std::size_t i = 0; i <= stage && i < stages.size(); ++i) stride *= stages[i].patch_stride;
  return stride;
}

Index FusionConfig::se_hidden(Index channels) const {
  const Index r = std::max<Index>(1, se_reduction);
  return (channels + r - 1) / r;
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_channel_attention: return "no_channel_attention";
    case Variant::no_parallel_convs: return "no_parallel_convs";
    case Variant::kernels_3_7_11: return "kernels_3_7_11";
    case Variant::linear_only: return "linear_only";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (const Variant v : kAllVariants) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown variant '" + name +
                    "' (expected full, no_channel_attention, no_parallel_convs, kernels_3_7_11, linear_only)");
}

std::string to_string(ConvGrouping g) { return g == ConvGrouping::depthwise ? "depthwise" : "dense"; }

FusionConfig ModelConfig::resolved_fusion() const {
  FusionConfig f = fusion;
  switch (variant) {
    case Variant::full: break;
    case Variant::no_channel_attention: f.enable_channel_attention = false; break;
    case Variant::no_parallel_convs: f.enable_parallel_convs = false; break;
    case Variant::kernels_3_7_11: f.kernel_sizes = {3, 7, 11}; break;
    case Variant::linear_only: f.linear_only = true; break;
  }
  return f;
}

void ModelConfig::validate() const {
  if (num_modalities < 1) throw ConfigError("model.num_modalities must be >= 1");
  if (encoder.in_channels < 1) throw ConfigError("encoder.in_channels must be >= 1");
  for (std::size_t i = 0; i < kNumStages; ++i) {
    const auto& s = encoder.stages[i];
    const std::string key = "encoder.stage" + std::to_string(i + 1);
    if (s.depth < 0) throw ConfigError(key + ".depth must be >= 0");
    if (s.channels < 1 || s.heads < 1) throw ConfigError(key + ": channels and heads must be >= 1");
    if (s.channels % s.heads != 0) {
      throw ConfigError(key + ": channels " + std::to_string(s.channels) + " not divisible by heads " +
                        std::to_string(s.heads));
    }
    if (s.reduction_ratio != 1 && s.reduction_ratio != 2 && s.reduction_ratio != 4 && s.reduction_ratio != 8) {
      throw ConfigError(key + ".reduction_ratio must be one of 1, 2, 4, 8");
    }
    if (s.ffn_expansion < 1) throw ConfigError(key + ".ffn_expansion must be >= 1");
    if (s.patch_kernel < 1 || s.patch_stride < 1 || s.patch_pad < 0) {
      throw ConfigError(key + ": invalid patch geometry");
    }
  }
  const Index expected[kNumStages] = {4, 8, 16, 32};
  for (std::size_t i = 0; i < kNumStages; ++i) {
    if (encoder.stage_stride(i) != expected[i]) {
      throw ConfigError("encoder: stage strides must compose to 4, 8, 16, 32; stage " + std::to_string(i + 1) +
                        " has overall stride " + std::to_string(encoder.stage_stride(i)));
    }
  }
  const FusionConfig f = resolved_fusion();
  if (f.se_reduction < 1) throw ConfigError("fusion.se_reduction must be >= 1");
  if (f.enable_parallel_convs && !f.linear_only && f.kernel_sizes.empty()) {
    throw ConfigError("fusion.kernel_sizes is empty while parallel convolutions are enabled");
  }
  for (const Index k : f.kernel_sizes) {
    if (k < 1 || k % 2 == 0) {
      throw ConfigError("fusion.kernel_sizes: kernel " + std::to_string(k) + " must be a positive odd integer");
    }
  }
  if (decoder.embed_dim < 1) throw ConfigError("decoder.embed_dim must be >= 1");
  if (decoder.num_classes < 2) throw ConfigError("decoder.num_classes must be >= 2");
  if (decoder.num_classes > 255) throw ConfigError("decoder.num_classes must be <= 255 (label 255 is ignore)");
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  const Index channels[] = {8, 16, 32, 64};
  const Index heads[] = {1, 2, 4, 8};
  const Index ratios[] = {8, 4, 2, 1};
  for (std::size_t i = 0; i < kNumStages; ++i) {
    auto& s = c.encoder.stages[i];
    s.depth = 1;
    s.channels = channels[i];
    s.heads = heads[i];
    s.reduction_ratio = ratios[i];
    s.ffn_expansion = 4;
    s.patch_kernel = i == 0 ? 7 : 3;
    s.patch_stride = i == 0 ? 4 : 2;
    s.patch_pad = i == 0 ? 3 : 1;
  }
  c.decoder.embed_dim = 32;
  return c;
}

ModelConfig ModelConfig::full_scale() {
  ModelConfig c = desk();
  const Index channels[] = {64, 128, 320, 512};
  const Index heads[] = {1, 2, 5, 8};
  const Index depths[] = {3, 4, 6, 3};
  for (std::size_t i = 0; i < kNumStages; ++i) {
    auto& s = c.encoder.stages[i];
    s.channels = channels[i];
    s.heads = heads[i];
    s.depth = depths[i];
  }
  c.decoder.embed_dim = 768;
  c.decoder.num_classes = 20;
  return c;
}

KeyValues ModelConfig::to_key_values() const {
  KeyValues kv;
  kv.set("model.num_modalities", std::to_string(num_modalities));
  kv.set("model.variant", to_string(variant));
  kv.set("model.seed", std::to_string(seed));
  kv.set("encoder.in_channels", std::to_string(encoder.in_channels));
  for (std::size_t i = 0; i < kNumStages; ++i) {
    const auto& s = encoder.stages[i];
    const std::string p = "encoder.stage" + std::to_string(i + 1) + ".";
    kv.set(p + "depth", std::to_string(s.depth));
    kv.set(p + "channels", std::to_string(s.channels));
    kv.set(p + "heads", std::to_string(s.heads));
    kv.set(p + "reduction_ratio", std::to_string(s.reduction_ratio));
    kv.set(p + "ffn_expansion", std::to_string(s.ffn_expansion));
    kv.set(p + "patch_kernel", std::to_string(s.patch_kernel));
    kv.set(p + "patch_stride", std::to_string(s.patch_stride));
    kv.set(p + "patch_pad", std::to_string(s.patch_pad));
  }
  std::vector<std::string> kernels;
  for (const Index k : fusion.kernel_sizes) kernels.push_back(std::to_string(k));
  kv.set("fusion.kernel_sizes", join(kernels, ","));
  kv.set("fusion.se_reduction", std::to_string(fusion.se_reduction));
  kv.set("fusion.conv_grouping", to_string(fusion.conv_grouping));
  kv.set("fusion.enable_channel_attention", fusion.enable_channel_attention ? "true" : "false");
  kv.set("fusion.enable_parallel_convs", fusion.enable_parallel_convs ? "true" : "false");
  kv.set("fusion.linear_only", fusion.linear_only ? "true" : "false");
  kv.set("decoder.embed_dim", std::to_string(decoder.embed_dim));
  kv.set("decoder.num_classes", std::to_string(decoder.num_classes));
  return kv;
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv, ModelConfig c) {
  for (const auto& [key, value] : kv.entries()) {
    const auto dot = key.find('.');
    const std::string prefix = key.substr(0, dot);
    if (prefix != "model" && prefix != "encoder" && prefix != "fusion" && prefix != "decoder") continue;
    const std::string rest = dot == std::string::npos ? "" : key.substr(dot + 1);

    if (key == "model.num_modalities") {
      c.num_modalities = parse_int(key, value);
    } else if (key == "model.variant") {
      c.variant = parse_variant(value);
    } else if (key == "model.seed") {
      c.seed = static_cast<std::uint64_t>(parse_int(key, value));
    } else if (key == "encoder.in_channels") {
      c.encoder.in_channels = parse_int(key, value);
    } else if (prefix == "encoder" && rest.rfind("stage", 0) == 0 && rest.size() > 7 && rest[6] == '.') {
      const int stage = rest[5] - '1';
      if (stage < 0 || stage >= static_cast<int>(kNumStages)) throw ConfigError("unknown config key: " + key);
      auto& s = c.encoder.stages[static_cast<std::size_t>(stage)];
      const std::string field = rest.substr(7);
      const Index v = parse_int(key, value);
      if (field == "depth") s.depth = v;
      else if (field == "channels") s.channels = v;
      else if (field == "heads") s.heads = v;
      else if (field == "reduction_ratio") s.reduction_ratio = v;
      else if (field == "ffn_expansion") s.ffn_expansion = v;
      else if (field == "patch_kernel") s.patch_kernel = v;
      else if (field == "patch_stride") s.patch_stride = v;
      else if (field == "patch_pad") s.patch_pad = v;
      else throw ConfigError("unknown config key: " + key);
    } else if (key == "fusion.kernel_sizes") {
      c.fusion.kernel_sizes = parse_int_list(key, value);
    } else if (key == "fusion.se_reduction") {
      c.fusion.se_reduction = parse_int(key, value);
    } else if (key == "fusion.conv_grouping") {
      if (value == "depthwise") c.fusion.conv_grouping = ConvGrouping::depthwise;
      else if (value == "dense") c.fusion.conv_grouping = ConvGrouping::dense;
      else throw ConfigError(key + ": expected depthwise or dense, got '" + value + "'");
    } else if (key == "fusion.enable_channel_attention") {
      c.fusion.enable_channel_attention = parse_bool(key, value);
    } else if (key == "fusion.enable_parallel_convs") {
      c.fusion.enable_parallel_convs = parse_bool(key, value);
    } else if (key == "fusion.linear_only") {
      c.fusion.linear_only = parse_bool(key, value);
    } else if (key == "decoder.embed_dim") {
      c.decoder.embed_dim = parse_int(key, value);
    } else if (key == "decoder.num_classes") {
      c.decoder.num_classes = parse_int(key, value);
    } else {
      throw ConfigError("unknown config key: " + key);
    }
  }
  return c;
}

}  // namespace mms
