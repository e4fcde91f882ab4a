#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lrdcast {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` file. `#` starts a comment; list values are comma
/// separated. Unknown keys are reported by `check_known`.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& entries() const noexcept { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;
  std::vector<long long> get_int_list(const std::string& key, const std::vector<long long>& fallback) const;

  void check_known(const std::vector<std::string>& known) const;

 private:
  std::optional<std::string> find(const std::string& key) const;

  std::string origin_;
  std::map<std::string, std::string> values_;
};

}  // namespace lrdcast
