#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rideshare/core.hpp"
#include "rideshare/io.hpp"

namespace rideshare {

/// Flat key/value configuration read from a small TOML subset:
///
///   # comment
///   [section]
///   key = 1.5            -> "section.key"
///   name = "text"
///   list = [0.1, 0.4]
///
/// Values are kept as raw text and converted on access. Every key must be
/// read at least once (see `unused`) so typos surface as errors.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& source = "<config>") {
    KeyValueConfig c;
    std::string section;
    std::size_t n = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      auto end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      std::string raw = text.substr(pos, end - pos);
      pos = end + 1;
      ++n;
      auto hash = find_comment(raw);
      std::string line(io::trim(raw.substr(0, hash)));
      if (line.empty()) continue;
      const std::string where = source + ":" + std::to_string(n);
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
        section = std::string(io::trim(std::string_view(line).substr(1, line.size() - 2)));
        if (section.empty()) throw ConfigError(where + ": empty section name");
        continue;
      }
      auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
      std::string key(io::trim(std::string_view(line).substr(0, eq)));
      std::string value(io::trim(std::string_view(line).substr(eq + 1)));
      if (key.empty()) throw ConfigError(where + ": empty key");
      if (value.empty()) throw ConfigError(where + ": empty value for '" + key + "'");
      c.put(section.empty() ? key : section + "." + key, value, where);
    }
    return c;
  }

  static KeyValueConfig load(const std::filesystem::path& path) {
    std::string text;
    try {
      text = io::read_file(path);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    auto c = parse(text, path.string());
    c.base_dir_ = path.parent_path();
    return c;
  }

  /// Applies a "dotted.key=value" override.
  void set(const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    std::string key(io::trim(std::string_view(assignment).substr(0, eq)));
    std::string value(io::trim(std::string_view(assignment).substr(eq + 1)));
    if (key.empty() || value.empty()) throw ConfigError("override '" + assignment + "' is incomplete");
    values_[key] = value;
    origin_[key] = "--set";
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    return to_number(key, raw(key));
  }

  long integer(const std::string& key, long fallback) const {
    if (!has(key)) return fallback;
    double v = number(key, 0.0);
    if (v != static_cast<double>(static_cast<long>(v)))
      throw ConfigError(origin_.at(key) + ": '" + key + "' must be an integer");
    return static_cast<long>(v);
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = raw(key);
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError(origin_.at(key) + ": '" + key + "' must be true or false");
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    auto v = raw(key);
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
    return v;
  }

  std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback) const {
    if (!has(key)) return fallback;
    auto v = raw(key);
    if (v.size() < 2 || v.front() != '[' || v.back() != ']')
      throw ConfigError(origin_.at(key) + ": '" + key + "' must be a [list]");
    std::vector<double> out;
    auto inner = std::string_view(v).substr(1, v.size() - 2);
    if (io::trim(inner).empty()) return out;
    for (auto part : io::split(inner, ',')) out.push_back(to_number(key, std::string(io::trim(part))));
    return out;
  }

  /// Path relative to the config file's directory.
  std::filesystem::path path(const std::string& key) const {
    std::filesystem::path p = text(key, "");
    if (p.empty() || p.is_absolute()) return p;
    return base_dir_ / p;
  }

  /// Keys present in the file that no accessor has read.
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (auto& [k, v] : values_)
      if (!read_.count(k)) out.push_back(k);
    return out;
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    for (auto& [k, v] : values_) out.push_back(k);
    return out;
  }

 private:
  static std::size_t find_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') quoted = !quoted;
      if (s[i] == '#' && !quoted) return i;
    }
    return s.size();
  }

  void put(const std::string& key, const std::string& value, const std::string& where) {
    if (values_.count(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    values_[key] = value;
    origin_[key] = where;
  }

  const std::string& raw(const std::string& key) const {
    read_.insert(key);
    return values_.at(key);
  }

  double to_number(const std::string& key, const std::string& v) const {
    try {
      return io::to_double(v, origin_.at(key));
    } catch (const ParseError&) {
      throw ConfigError(origin_.at(key) + ": '" + key + "' must be a number, got '" + v + "'");
    }
  }

  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> origin_;
  mutable std::set<std::string> read_;
  std::filesystem::path base_dir_;
};

}  // namespace rideshare
