// SPDX-License-Identifier: Apache-2.0
#pragma once

// Flat `key = value` text. Blank lines and lines starting with '#' are ignored;
// keys are unique; values run to end of line with surrounding blanks trimmed.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "stst/stain.hpp"

namespace stst {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.contains(key); }
  std::optional<std::string> get(const std::string& key) const;
  void set(const std::string& key, std::string value);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Throws ConfigError naming the first key outside `known` (prefix matches end in '.').
  void require_known(const std::set<std::string>& known) const;

  /// Sorted `key = value` lines.
  std::string serialize() const;
  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

/// `<prefix>H = r g b` style stain columns; Background may be absent.
StainMatrix stain_matrix_from_config(const KeyValueConfig& cfg, const std::string& prefix = "stain.");
void stain_matrix_to_config(const StainMatrix& m, KeyValueConfig& cfg, const std::string& prefix = "stain.");

}  // namespace stst
