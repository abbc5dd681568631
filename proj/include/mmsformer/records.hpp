// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace mms {

using Json = nlohmann::ordered_json;

/// Line-delimited JSON: one compact object per line.
std::string to_jsonl(const std::vector<Json>& records);
std::vector<Json> parse_jsonl(const std::string& text, const std::string& source = "<text>");

void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records);
std::vector<Json> read_jsonl(const std::filesystem::path& path);

/// Writes a text file, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace mms
