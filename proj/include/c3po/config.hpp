#pragma once

// Flat key/value configuration. Layers, lowest to highest precedence:
// built-in defaults, config file, command-line flags, C3PO_* environment.

#include <cctype>
#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "c3po/error.hpp"

namespace c3po {

class Config {
 public:
  using Map = std::map<std::string, std::string>;

  Config() = default;
  explicit Config(Map values) : values_(std::move(values)) {}

  // "key = value" lines; '#' starts a comment line.
  static Config parse(std::string_view text) {
    Config c;
    std::size_t pos = 0, line_no = 0;
    while (pos <= text.size()) {
      const auto nl = text.find('\n', pos);
      auto line = trim(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
      ++line_no;
      pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
      if (line.empty() || line.front() == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos || trim(line.substr(0, eq)).empty()) {
        throw Error(ErrorCode::InvalidConfig, "config line " + std::to_string(line_no) + ": expected key = value");
      }
      c.values_[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
    }
    return c;
  }

  // C3PO_LEARNING_RATE=0.01 -> learning_rate = 0.01. `env` is a
  // null-terminated "NAME=value" array (environ).
  static Config from_env(char** env) {
    Config c;
    for (; env && *env; ++env) {
      std::string_view kv(*env);
      if (!kv.starts_with("C3PO_")) continue;
      const auto eq = kv.find('=');
      if (eq == std::string_view::npos) continue;
      std::string key(kv.substr(5, eq - 5));
      for (auto& ch : key) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      c.values_[key] = std::string(kv.substr(eq + 1));
    }
    return c;
  }

  // Values in `top` win.
  Config& overlay(const Config& top) {
    for (const auto& [k, v] : top.values_) values_[k] = v;
    return *this;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const Map& values() const { return values_; }

  const std::string& str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw Error(ErrorCode::InvalidConfig, "missing config key '" + key + "'");
    return it->second;
  }

  template <typename T>
  T get(const std::string& key) const {
    const auto& s = str(key);
    T out{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw Error(ErrorCode::InvalidConfig, "config key '" + key + "' has bad value '" + s + "'");
    }
    return out;
  }

  bool flag(const std::string& key) const {
    const auto& s = str(key);
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    throw Error(ErrorCode::InvalidConfig, "config key '" + key + "' is not a boolean: '" + s + "'");
  }

  std::string emit() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

 private:
  static std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  }

  Map values_;
};

}  // namespace c3po
