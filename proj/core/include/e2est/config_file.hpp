// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace e2est {

/// Flat `key = value` configuration. Keys are dotted ("model.lambda");
/// '#' starts a comment; blank lines are ignored. Keys iterate sorted.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text, std::string_view origin = "<string>");
  static KeyValues load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value);
  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  /// Accepts on/off, true/false, yes/no, 1/0.
  bool get_bool(const std::string& key, bool fallback) const;

  /// Entries of `overrides` replace or extend this set.
  void merge(const KeyValues& overrides);
  /// Throws ConfigError naming the first key not in `known`.
  void require_known(const std::vector<std::string>& known) const;

  const std::map<std::string, std::string>& entries() const { return values_; }
  std::string to_text() const;
  bool operator==(const KeyValues& other) const = default;

 private:
  std::map<std::string, std::string> values_;
};

std::string format_double(double value);

}  // namespace e2est
