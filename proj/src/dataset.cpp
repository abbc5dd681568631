// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmsformer/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mmsformer/rng.hpp"

namespace mms {

namespace fs = std::filesystem;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::string& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  return v;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void require_bytes(const std::string& bytes, std::size_t needed, const fs::path& path, const char* what) {
  if (bytes.size() < needed) {
    throw FormatError(path.string() + ": truncated " + what + " (" + std::to_string(bytes.size()) + " of " +
                      std::to_string(needed) + " bytes)");
  }
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

void write_raster(const fs::path& path, const Tensor& t) {
  std::string bytes = "TNSR";
  put_u32(bytes, kRasterVersion);
  put_u32(bytes, static_cast<std::uint32_t>(t.rank()));
  for (const Index d : t.shape()) put_u32(bytes, static_cast<std::uint32_t>(d));
  for (const float v : t.data()) put_u32(bytes, std::bit_cast<std::uint32_t>(v));
  write_file(path, bytes);
}

Tensor read_raster(const fs::path& path) {
  const std::string bytes = read_file(path);
  require_bytes(bytes, 12, path, "header");
  if (bytes.compare(0, 4, "TNSR") != 0) throw FormatError(path.string() + ": bad magic, expected TNSR");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kRasterVersion) throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
  const std::uint32_t ndim = get_u32(bytes, 8);
  if (ndim == 0 || ndim > 8) throw FormatError(path.string() + ": bad rank " + std::to_string(ndim));
  require_bytes(bytes, 12 + 4 * std::size_t{ndim}, path, "header");
  Shape shape;
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    const std::uint32_t d = get_u32(bytes, 12 + 4 * i);
    if (d == 0) throw FormatError(path.string() + ": zero extent in header");
    shape.push_back(d);
    count *= d;
  }
  const std::size_t offset = 12 + 4 * std::size_t{ndim};
  if (bytes.size() != offset + 4 * count) {
    throw FormatError(path.string() + ": payload is " + std::to_string(bytes.size() - offset) + " bytes, header implies " +
                      std::to_string(4 * count));
  }
  std::vector<float> values(count);
  for (std::size_t i = 0; i < count; ++i) values[i] = std::bit_cast<float>(get_u32(bytes, offset + 4 * i));
  return Tensor::from(std::move(shape), std::move(values));
}

void write_labels(const fs::path& path, const LabelMap& labels) {
  std::string bytes = "LBLS";
  put_u32(bytes, static_cast<std::uint32_t>(labels.height));
  put_u32(bytes, static_cast<std::uint32_t>(labels.width));
  bytes.append(labels.labels.begin(), labels.labels.end());
  write_file(path, bytes);
}

LabelMap read_labels(const fs::path& path) {
  const std::string bytes = read_file(path);
  require_bytes(bytes, 12, path, "header");
  if (bytes.compare(0, 4, "LBLS") != 0) throw FormatError(path.string() + ": bad magic, expected LBLS");
  const std::uint32_t h = get_u32(bytes, 4);
  const std::uint32_t w = get_u32(bytes, 8);
  if (h == 0 || w == 0) throw FormatError(path.string() + ": zero extent in header");
  if (bytes.size() != 12 + std::size_t{h} * w) {
    throw FormatError(path.string() + ": payload is " + std::to_string(bytes.size() - 12) + " bytes, expected " +
                      std::to_string(std::size_t{h} * w));
  }
  LabelMap out(h, w);
  std::memcpy(out.labels.data(), bytes.data() + 12, out.labels.size());
  return out;
}

std::size_t DatasetManifest::modality_index(const std::string& name) const {
  const auto it = std::find(modalities.begin(), modalities.end(), name);
  if (it == modalities.end()) {
    throw ConfigError("modality '" + name + "' not in dataset (have " + join(modalities, ",") + ")");
  }
  return static_cast<std::size_t>(it - modalities.begin());
}

const std::vector<std::string>& DatasetManifest::split(const std::string& name) const {
  const auto it = splits.find(name);
  if (it == splits.end()) throw ConfigError("dataset has no split '" + name + "'");
  return it->second;
}

KeyValues DatasetManifest::to_key_values() const {
  KeyValues kv;
  kv.set("dataset.modalities", join(modalities, ","));
  kv.set("dataset.classes", join(classes, ","));
  kv.set("dataset.height", std::to_string(height));
  kv.set("dataset.width", std::to_string(width));
  for (const auto& [name, ids] : splits) kv.set("split." + name, join(ids, ","));
  kv.merge(extra);
  return kv;
}

DatasetManifest DatasetManifest::from_key_values(const KeyValues& kv) {
  DatasetManifest m;
  auto need = [&](const std::string& key) {
    auto v = kv.get(key);
    if (!v) throw ConfigError("manifest: missing key " + key);
    return *v;
  };
  m.modalities = split_list(need("dataset.modalities"));
  m.classes = split_list(need("dataset.classes"));
  m.height = parse_int("dataset.height", need("dataset.height"));
  m.width = parse_int("dataset.width", need("dataset.width"));
  if (m.modalities.empty()) throw ConfigError("manifest: no modalities");
  if (m.classes.size() < 2 || m.classes.size() > 255) throw ConfigError("manifest: need 2..255 classes");
  if (m.height <= 0 || m.width <= 0) throw ConfigError("manifest: non-positive extent");
  for (const auto& [key, value] : kv.entries()) {
    if (key.rfind("split.", 0) == 0) {
      m.splits[key.substr(6)] = split_list(value);
    } else if (key.rfind("dataset.", 0) != 0) {
      m.extra.set(key, value);
    }
  }
  return m;
}

DatasetManifest load_manifest(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("dataset directory not found: " + root.string());
  return DatasetManifest::from_key_values(KeyValues::load(root / "manifest.txt"));
}

void save_manifest(const fs::path& root, const DatasetManifest& manifest) {
  fs::create_directories(root);
  manifest.to_key_values().save(root / "manifest.txt");
}

fs::path raster_path(const fs::path& root, const std::string& split, const std::string& modality,
                     const std::string& id) {
  return root / split / modality / (id + ".tns");
}

fs::path label_path(const fs::path& root, const std::string& split, const std::string& id) {
  return root / split / "labels" / (id + ".lbl");
}

Sample load_sample(const fs::path& root, const DatasetManifest& manifest, const std::string& split,
                   const std::string& id, const std::vector<std::string>& modalities) {
  const auto& wanted = modalities.empty() ? manifest.modalities : modalities;
  Sample s;
  s.id = id;
  for (const auto& name : wanted) {
    manifest.modality_index(name);
    const auto path = raster_path(root, split, name, id);
    Tensor t = read_raster(path);
    if (t.shape() != Shape{3, manifest.height, manifest.width}) {
      throw FormatError(path.string() + ": shape " + to_string(t.shape()) + ", manifest expects [3," +
                        std::to_string(manifest.height) + "," + std::to_string(manifest.width) + "]");
    }
    s.images.push_back(std::move(t));
  }
  const auto lpath = label_path(root, split, id);
  s.labels = read_labels(lpath);
  if (s.labels.height != manifest.height || s.labels.width != manifest.width) {
    throw FormatError(lpath.string() + ": label extent differs from manifest");
  }
  return s;
}

Dataset load_split(const fs::path& root, const std::string& split, const std::vector<std::string>& modalities) {
  const DatasetManifest manifest = load_manifest(root);
  Dataset d;
  d.modalities = modalities.empty() ? manifest.modalities : modalities;
  d.classes = manifest.classes;
  for (const auto& id : manifest.split(split)) d.samples.push_back(load_sample(root, manifest, split, id, d.modalities));
  return d;
}

std::string to_string(SyntheticMode mode) {
  switch (mode) {
    case SyntheticMode::single_modality_sufficient: return "single_modality_sufficient";
    case SyntheticMode::xor_fusion: return "xor_fusion";
    case SyntheticMode::per_class_modality: return "per_class_modality";
  }
  return "?";
}

SyntheticMode parse_synthetic_mode(const std::string& name) {
  for (auto m : {SyntheticMode::single_modality_sufficient, SyntheticMode::xor_fusion,
                 SyntheticMode::per_class_modality}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown synthetic mode '" + name + "'");
}

void SyntheticSpec::validate() const {
  if (num_modalities < 1 || num_modalities > 16) throw ConfigError("synthetic: modalities must be in 1..16");
  if (num_classes < 2 || num_classes > 255) throw ConfigError("synthetic: classes must be in 2..255");
  if (extent < 32 || extent % 32 != 0) throw ConfigError("synthetic: extent must be a positive multiple of 32");
  if (train_samples < 1) throw ConfigError("synthetic: need at least one training sample");
  if (val_samples < 0) throw ConfigError("synthetic: negative validation sample count");
  if (!(noise_sigma >= 0.0)) throw ConfigError("synthetic: noise must be non-negative");
  if (cell < 0 || cell_size() < 1 || extent % cell_size() != 0) {
    throw ConfigError("synthetic: cell size must divide the extent");
  }
  if (mode != SyntheticMode::single_modality_sufficient && num_modalities < 2) {
    throw ConfigError("synthetic: " + to_string(mode) + " needs at least 2 modalities");
  }
  if (mode == SyntheticMode::xor_fusion && num_classes != 2) {
    throw ConfigError("synthetic: xor_fusion is a two-class task");
  }
}

KeyValues SyntheticSpec::to_key_values() const {
  KeyValues kv;
  kv.set("synthetic.mode", to_string(mode));
  kv.set("synthetic.modalities", std::to_string(num_modalities));
  kv.set("synthetic.classes", std::to_string(num_classes));
  kv.set("synthetic.extent", std::to_string(extent));
  kv.set("synthetic.train_samples", std::to_string(train_samples));
  kv.set("synthetic.val_samples", std::to_string(val_samples));
  kv.set("synthetic.noise_sigma", format_real(noise_sigma));
  kv.set("synthetic.seed", std::to_string(seed));
  kv.set("synthetic.cell", std::to_string(cell));
  return kv;
}

SyntheticSpec SyntheticSpec::from_key_values(const KeyValues& kv, SyntheticSpec s) {
  for (const auto& [key, value] : kv.entries()) {
    if (key.rfind("synthetic.", 0) != 0) continue;
    const std::string k = key.substr(10);
    if (k == "mode") {
      s.mode = parse_synthetic_mode(value);
    } else if (k == "modalities") {
      s.num_modalities = parse_int(key, value);
    } else if (k == "classes") {
      s.num_classes = parse_int(key, value);
    } else if (k == "extent") {
      s.extent = parse_int(key, value);
    } else if (k == "train_samples") {
      s.train_samples = parse_int(key, value);
    } else if (k == "val_samples") {
      s.val_samples = parse_int(key, value);
    } else if (k == "noise_sigma") {
      s.noise_sigma = parse_real(key, value);
    } else if (k == "seed") {
      s.seed = static_cast<std::uint64_t>(parse_int(key, value));
    } else if (k == "cell") {
      s.cell = parse_int(key, value);
    } else {
      throw ConfigError("unknown config key " + key);
    }
  }
  return s;
}

namespace {

std::string sample_id(Index i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%04lld", static_cast<long long>(i));
  return buf;
}

// Intensity of class c on a [-1, 1] ladder.
float class_level(Index c, Index k) {
  return static_cast<float>(-1.0 + 2.0 * static_cast<double>(c) / static_cast<double>(k - 1));
}

Sample make_sample(const SyntheticSpec& spec, std::uint64_t split_tag, Index index) {
  Rng rng(splitmix(spec.seed ^ splitmix(split_tag ^ splitmix(static_cast<std::uint64_t>(index)))));
  const Index n = spec.extent;
  const Index cell = spec.cell_size();
  const Index cells = n / cell;
  const Index m_count = spec.num_modalities;

  // Cell-level hidden fields, drawn before any noise so they do not depend on
  // the noise level.
  std::vector<Index> cell_class(static_cast<std::size_t>(cells * cells));
  std::vector<int> cell_sign(cell_class.size());
  int global_sign = 1;
  if (spec.mode == SyntheticMode::xor_fusion) {
    for (auto& s : cell_sign) s = rng.below(2) ? 1 : -1;
    global_sign = rng.below(2) ? 1 : -1;
    for (std::size_t i = 0; i < cell_class.size(); ++i) cell_class[i] = cell_sign[i] * global_sign > 0 ? 1 : 0;
  } else {
    for (auto& c : cell_class) c = static_cast<Index>(rng.below(static_cast<std::uint64_t>(spec.num_classes)));
  }

  Sample s;
  s.id = sample_id(index);
  s.labels = LabelMap(n, n);
  for (Index y = 0; y < n; ++y) {
    for (Index x = 0; x < n; ++x) {
      const bool border = y < kBorderIgnore || x < kBorderIgnore || y >= n - kBorderIgnore || x >= n - kBorderIgnore;
      const Index c = cell_class[static_cast<std::size_t>((y / cell) * cells + x / cell)];
      s.labels.at(y, x) = border ? kIgnoreIndex : static_cast<std::uint8_t>(c);
    }
  }

  for (Index m = 0; m < m_count; ++m) {
    std::vector<float> v(static_cast<std::size_t>(3 * n * n), 0.0f);
    for (Index y = 0; y < n; ++y) {
      for (Index x = 0; x < n; ++x) {
        const std::size_t ci = static_cast<std::size_t>((y / cell) * cells + x / cell);
        const Index c = cell_class[ci];
        float value = 0.0f;
        switch (spec.mode) {
          case SyntheticMode::single_modality_sufficient:
            value = m == 0 ? class_level(c, spec.num_classes) : 0.0f;
            break;
          case SyntheticMode::xor_fusion:
            value = m == 0 ? static_cast<float>(cell_sign[ci]) : m == 1 ? static_cast<float>(global_sign) : 0.0f;
            break;
          case SyntheticMode::per_class_modality: {
            value = -1.0f;
            if (c >= 1 && (c - 1) % m_count == m) {
              const Index tied = (spec.num_classes - 1 - m + m_count - 1) / m_count;
              const Index rank = (c - 1) / m_count;
              value = static_cast<float>(rank + 1) / static_cast<float>(tied);
            }
            break;
          }
        }
        for (Index ch = 0; ch < 3; ++ch) v[static_cast<std::size_t>((ch * n + y) * n + x)] = value;
      }
    }
    if (spec.noise_sigma > 0.0) {
      for (auto& x : v) x += static_cast<float>(spec.noise_sigma * rng.normal());
    }
    s.images.push_back(Tensor::from({3, n, n}, std::move(v)));
  }
  return s;
}

std::uint64_t split_tag(const std::string& split) { return split == "train" ? 1 : split == "val" ? 2 : 3; }

std::vector<std::string> synthetic_modalities(Index m) {
  std::vector<std::string> out;
  for (Index i = 1; i <= m; ++i) out.push_back("mod" + std::to_string(i));
  return out;
}

std::vector<std::string> synthetic_classes(Index k) {
  std::vector<std::string> out;
  for (Index i = 0; i < k; ++i) out.push_back("class" + std::to_string(i));
  return out;
}

}  // namespace

Dataset synthesize(const SyntheticSpec& spec, const std::string& split) {
  spec.validate();
  Dataset d;
  d.modalities = synthetic_modalities(spec.num_modalities);
  d.classes = synthetic_classes(spec.num_classes);
  const Index count = split == "train" ? spec.train_samples : split == "val" ? spec.val_samples : 0;
  for (Index i = 0; i < count; ++i) d.samples.push_back(make_sample(spec, split_tag(split), i));
  return d;
}

DatasetManifest generate_synthetic(const SyntheticSpec& spec, const fs::path& root) {
  spec.validate();
  DatasetManifest manifest;
  manifest.modalities = synthetic_modalities(spec.num_modalities);
  manifest.classes = synthetic_classes(spec.num_classes);
  manifest.height = spec.extent;
  manifest.width = spec.extent;
  manifest.extra = spec.to_key_values();
  for (const std::string split : {"train", "val"}) {
    const Dataset d = synthesize(spec, split);
    if (d.empty()) continue;
    auto& ids = manifest.splits[split];
    for (const auto& s : d.samples) {
      ids.push_back(s.id);
      for (std::size_t m = 0; m < s.images.size(); ++m) {
        write_raster(raster_path(root, split, manifest.modalities[m], s.id), s.images[m]);
      }
      write_labels(label_path(root, split, s.id), s.labels);
    }
  }
  save_manifest(root, manifest);
  return manifest;
}

}  // namespace mms
