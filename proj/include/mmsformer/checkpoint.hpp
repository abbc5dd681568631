// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mmsformer/model.hpp"

namespace mms {

// Little-endian container:
//   "MMSC" u32 version, u64 step,
//   u32 n, n bytes of config text (ModelConfig key-value form),
//   u32 tensor count, then per tensor:
//     u32 n, n bytes of name, u32 ndim, u32 dims[ndim], f32 payload
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  std::uint64_t step = 0;
  std::vector<Parameter<float>> tensors;
};

std::string serialize_checkpoint(const MmsFormer<float>& model, std::uint64_t step);
void save_checkpoint(const std::filesystem::path& path, const MmsFormer<float>& model, std::uint64_t step);

Checkpoint parse_checkpoint(const std::string& bytes, const std::string& source = "<bytes>");
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Builds the model described by the checkpoint and loads its weights. Every
/// model parameter must be present with a matching shape, and no extras.
MmsFormer<float> restore_model(const Checkpoint& checkpoint);

}  // namespace mms
