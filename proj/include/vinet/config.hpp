#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace vinet {

/// Flat `key = value` text configuration. Blank lines and `#` comments are ignored.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;
  explicit KeyValueConfig(std::map<std::string, std::string> values) : values_(std::move(values)) {}

  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Throws ContractError naming the first key outside `known`.
  void check_known(const std::set<std::string>& known) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace vinet
