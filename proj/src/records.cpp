// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmsformer/records.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include "mmsformer/error.hpp"

namespace mms {

namespace fs = std::filesystem;

std::string to_jsonl(const std::vector<Json>& records) {
  std::string out;
  for (const auto& r : records) {
    if (!r.is_object()) throw ContractError("jsonl: every record must be an object");
    out += r.dump();
    out += '\n';
  }
  return out;
}

std::vector<Json> parse_jsonl(const std::string& text, const std::string& source) {
  std::vector<Json> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw FormatError(source + ":" + std::to_string(lineno) + ": not a JSON object record");
    }
    out.push_back(std::move(j));
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void write_jsonl(const fs::path& path, const std::vector<Json>& records) { write_text(path, to_jsonl(records)); }

std::vector<Json> read_jsonl(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_jsonl(text, path.string());
}

}  // namespace mms
