#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "fcm/common.hpp"

namespace fcm {

// Minimal TOML subset: [section] and [a.b] tables, key = value lines with
// strings, integers, floats, booleans, and flat scalar arrays. Keys are
// flattened to "section.key". Enough for run configs, nothing more.
struct TomlValue {
  std::variant<std::string, int64_t, double, bool, std::vector<double>> value;

  const std::string& as_string() const;
  int64_t as_int() const;
  double as_double() const;  // accepts integers too
  bool as_bool() const;
  const std::vector<double>& as_array() const;
};

class TomlTable {
 public:
  static TomlTable parse_file(const std::string& path);
  static TomlTable parse(const std::string& text);

  bool contains(const std::string& key) const { return values_.count(key) > 0; }
  const TomlValue& at(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, TomlValue>& entries() const { return values_; }

 private:
  std::map<std::string, TomlValue> values_;
};

}  // namespace fcm
