#include "lrdcast/kv_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace lrdcast {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& text, const std::string& key, const std::string& origin) {
  T v{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) throw ConfigError(origin + ": key '" + key + "' has bad value '" + text + "'");
  return v;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (!cfg.values_.emplace(key, trim(std::string_view(body).substr(eq + 1))).second) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::optional<std::string> KeyValueConfig::find(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  return find(key).value_or(fallback);
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  const auto v = find(key);
  return v ? parse_number<long long>(*v, key, origin_) : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto v = find(key);
  return v ? parse_number<double>(*v, key, origin_) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw ConfigError(origin_ + ": key '" + key + "' is not a boolean: '" + *v + "'");
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key,
                                                  const std::vector<std::string>& fallback) const {
  const auto v = find(key);
  if (!v) return fallback;
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(*v);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError(origin_ + ": key '" + key + "' has an empty list item");
    out.push_back(item);
  }
  if (out.empty()) throw ConfigError(origin_ + ": key '" + key + "' has an empty list");
  return out;
}

std::vector<long long> KeyValueConfig::get_int_list(const std::string& key,
                                                    const std::vector<long long>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<long long> out;
  for (const auto& item : get_list(key, {})) out.push_back(parse_number<long long>(item, key, origin_));
  return out;
}

void KeyValueConfig::check_known(const std::vector<std::string>& known) const {
  for (const auto& [key, value] : values_) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError(origin_ + ": unknown key '" + key + "'");
    }
  }
}

}  // namespace lrdcast
