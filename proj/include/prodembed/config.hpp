// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace prodembed::cli {

// Flat key-value run configuration. File format: one "key = value" per line,
// '#' comments, dotted keys for grouping. Later sets override earlier ones,
// so command-line flags can be layered over a file. render() is canonical
// (sorted) and serves as the resolved-config snapshot.
class KvConfig {
 public:
  static KvConfig load_file(const std::string& path);
  static KvConfig parse(const std::string& text);

  void set(const std::string& key, const std::string& value);
  void merge(const KvConfig& overrides);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get_str(const std::string& key, const std::string& fallback) const;
  std::string require_str(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;

  std::string render() const;
  std::string hash() const;
  void write_snapshot(const std::string& path) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace prodembed::cli
