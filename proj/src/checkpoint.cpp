// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmsformer/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

namespace mms {

namespace fs = std::filesystem;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::string& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_string(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw FormatError(source_ + ": truncated checkpoint at byte " + std::to_string(pos_));
    }
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    return lo | (static_cast<std::uint64_t>(u32()) << 32);
  }
  std::string string() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  const std::string& source() const { return source_; }

 private:
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const MmsFormer<float>& model, std::uint64_t step) {
  std::string out = "MMSC";
  put_u32(out, kCheckpointVersion);
  put_u64(out, step);
  put_string(out, model.config().to_key_values().serialize());
  const auto& items = model.parameters().items();
  put_u32(out, static_cast<std::uint32_t>(items.size()));
  for (const auto& p : items) {
    put_string(out, p.name);
    put_u32(out, static_cast<std::uint32_t>(p.tensor.rank()));
    for (const Index d : p.tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (const float v : p.tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

void save_checkpoint(const fs::path& path, const MmsFormer<float>& model, std::uint64_t step) {
  const std::string bytes = serialize_checkpoint(model, step);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for checkpoint " + path.string());
}

Checkpoint parse_checkpoint(const std::string& bytes, const std::string& source) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "MMSC") != 0) throw FormatError(source + ": bad magic, expected MMSC");
  const std::string body = bytes.substr(4);
  Reader in(body, source);
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) throw FormatError(source + ": unsupported version " + std::to_string(version));
  Checkpoint ck;
  ck.step = in.u64();
  ck.config = ModelConfig::from_key_values(KeyValues::parse(in.string(), source + " (config)"));
  const std::uint32_t count = in.u32();
  for (std::uint32_t t = 0; t < count; ++t) {
    Parameter<float> p;
    p.name = in.string();
    const std::uint32_t ndim = in.u32();
    if (ndim == 0 || ndim > 8) throw FormatError(source + ": bad rank for " + p.name);
    Shape shape;
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
      const std::uint32_t d = in.u32();
      if (d == 0) throw FormatError(source + ": zero extent for " + p.name);
      shape.push_back(d);
      n *= d;
    }
    in.need(4 * n);
    std::vector<float> values(n);
    for (auto& v : values) v = std::bit_cast<float>(in.u32());
    p.tensor = Tensor::from(std::move(shape), std::move(values));
    ck.tensors.push_back(std::move(p));
  }
  if (!in.done()) throw FormatError(source + ": trailing bytes after last tensor");
  return ck;
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes, path.string());
}

MmsFormer<float> restore_model(const Checkpoint& checkpoint) {
  MmsFormer<float> model(checkpoint.config);
  ParameterSet<float> stored;
  for (const auto& p : checkpoint.tensors) stored.add(p.name, p.tensor);
  if (stored.size() != model.parameters().size()) {
    throw FormatError("checkpoint holds " + std::to_string(stored.size()) + " tensors, model has " +
                      std::to_string(model.parameters().size()));
  }
  try {
    copy_parameters(stored, model.parameters());
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  } catch (const ShapeError& e) {
    throw FormatError(e.what());
  }
  return model;
}

}  // namespace mms
