// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mms {

/// Flat `dotted.key = value` text, one entry per line, `#` starts a comment.
/// Insertion order is kept; setting an existing key replaces its value in
/// place (last write wins).
class KeyValues {
 public:
  static KeyValues parse(std::string_view text, const std::string& source = "<text>");
  static KeyValues load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value);
  /// Applies a `key=value` override string.
  void apply_override(std::string_view assignment);
  void merge(const KeyValues& other);

  bool contains(const std::string& key) const;
  std::optional<std::string> get(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Strict scalar parsers; each raises ConfigError naming `key` on bad input.
std::int64_t parse_int(const std::string& key, const std::string& value);
double parse_real(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
std::vector<std::int64_t> parse_int_list(const std::string& key, const std::string& value);
std::vector<std::string> split_list(const std::string& value);

/// Shortest decimal text that round-trips the double exactly.
std::string format_real(double value);
std::string join(const std::vector<std::string>& items, const std::string& sep);

}  // namespace mms
