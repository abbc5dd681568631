// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mmsformer/decoder.hpp"
#include "mmsformer/kv.hpp"
#include "mmsformer/tensor.hpp"

namespace mms {

// Binary containers. Both are little-endian regardless of host order.
//   raster: "TNSR" u32 version, u32 ndim, u32 dims[ndim], f32 payload
//   label:  "LBLS" u32 H, u32 W, u8 payload (255 = ignore)
inline constexpr std::uint32_t kRasterVersion = 1;

void write_raster(const std::filesystem::path& path, const Tensor& t);
Tensor read_raster(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const LabelMap& labels);
LabelMap read_labels(const std::filesystem::path& path);

/// Dataset description stored as `root/manifest.txt`:
///   dataset.modalities = rgb,aolp
///   dataset.classes = background,metal
///   dataset.height = 64
///   dataset.width = 64
///   split.train = s0000,s0001
/// Any other keys (e.g. generator settings) are carried through untouched.
struct DatasetManifest {
  std::vector<std::string> modalities;
  std::vector<std::string> classes;
  Index height = 0;
  Index width = 0;
  std::map<std::string, std::vector<std::string>> splits;
  KeyValues extra;

  Index num_classes() const { return static_cast<Index>(classes.size()); }
  /// Index of a modality name; ConfigError if absent.
  std::size_t modality_index(const std::string& name) const;
  const std::vector<std::string>& split(const std::string& name) const;

  KeyValues to_key_values() const;
  static DatasetManifest from_key_values(const KeyValues& kv);
};

DatasetManifest load_manifest(const std::filesystem::path& root);
void save_manifest(const std::filesystem::path& root, const DatasetManifest& manifest);

std::filesystem::path raster_path(const std::filesystem::path& root, const std::string& split,
                                  const std::string& modality, const std::string& id);
std::filesystem::path label_path(const std::filesystem::path& root, const std::string& split,
                                 const std::string& id);

struct Sample {
  std::string id;
  std::vector<Tensor> images;  // [3,H,W] per requested modality
  LabelMap labels;
};

/// Loads one sample with the requested modalities in request order. An empty
/// request means every modality in manifest order.
Sample load_sample(const std::filesystem::path& root, const DatasetManifest& manifest, const std::string& split,
                   const std::string& id, const std::vector<std::string>& modalities = {});

/// A fully loaded split.
struct Dataset {
  std::vector<std::string> modalities;
  std::vector<std::string> classes;
  std::vector<Sample> samples;

  Index num_modalities() const { return static_cast<Index>(modalities.size()); }
  Index num_classes() const { return static_cast<Index>(classes.size()); }
  bool empty() const { return samples.empty(); }
};

Dataset load_split(const std::filesystem::path& root, const std::string& split,
                   const std::vector<std::string>& modalities = {});

enum class SyntheticMode { single_modality_sufficient, xor_fusion, per_class_modality };

std::string to_string(SyntheticMode mode);
SyntheticMode parse_synthetic_mode(const std::string& name);

struct SyntheticSpec {
  Index num_modalities = 2;
  Index num_classes = 2;
  Index extent = 32;
  Index train_samples = 8;
  Index val_samples = 0;
  SyntheticMode mode = SyntheticMode::xor_fusion;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  /// Side of the square label cells; 0 means extent / 4.
  Index cell = 0;

  /// Raises ConfigError on an unusable spec.
  void validate() const;
  Index cell_size() const { return cell > 0 ? cell : extent / 4; }

  KeyValues to_key_values() const;
  /// Reads `synthetic.*` keys on top of `base`; other prefixes are ignored.
  static SyntheticSpec from_key_values(const KeyValues& kv, SyntheticSpec base);
  static SyntheticSpec from_key_values(const KeyValues& kv) { return from_key_values(kv, SyntheticSpec{}); }
};

/// Width of the ignore band along every image edge.
inline constexpr Index kBorderIgnore = 2;

/// Writes a complete dataset (manifest, rasters, labels) under `root`.
///
/// single_modality_sufficient: modality 1 shows each class as its own colour;
///   the others are noise only.
/// xor_fusion (K = 2): modality 1 carries a cell-wise sign field a, modality 2
///   one global sign b per image; label = [a·b > 0]. Further modalities are
///   noise only.
/// per_class_modality: class c ≥ 1 is painted only into modality (c−1) mod M;
///   everywhere else that modality shows background.
DatasetManifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& root);

/// In-memory version of the same generator (one split).
Dataset synthesize(const SyntheticSpec& spec, const std::string& split);

}  // namespace mms
