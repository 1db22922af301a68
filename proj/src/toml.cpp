#include "fcm/toml.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace fcm {

const std::string& TomlValue::as_string() const {
  if (auto* s = std::get_if<std::string>(&value)) return *s;
  throw ConfigError("config value is not a string");
}

int64_t TomlValue::as_int() const {
  if (auto* i = std::get_if<int64_t>(&value)) return *i;
  throw ConfigError("config value is not an integer");
}

double TomlValue::as_double() const {
  if (auto* d = std::get_if<double>(&value)) return *d;
  if (auto* i = std::get_if<int64_t>(&value)) return static_cast<double>(*i);
  throw ConfigError("config value is not a number");
}

bool TomlValue::as_bool() const {
  if (auto* b = std::get_if<bool>(&value)) return *b;
  throw ConfigError("config value is not a boolean");
}

const std::vector<double>& TomlValue::as_array() const {
  if (auto* a = std::get_if<std::vector<double>>(&value)) return *a;
  throw ConfigError("config value is not an array");
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

TomlValue parse_scalar(const std::string& raw, int line_no) {
  if (raw.empty()) throw ConfigError("empty value on line " + std::to_string(line_no));
  if (raw.front() == '"') {
    if (raw.size() < 2 || raw.back() != '"')
      throw ConfigError("unterminated string on line " + std::to_string(line_no));
    return {raw.substr(1, raw.size() - 2)};
  }
  if (raw == "true") return {true};
  if (raw == "false") return {false};
  try {
    size_t used = 0;
    if (raw.find_first_of(".eE") == std::string::npos) {
      int64_t i = std::stoll(raw, &used);
      if (used == raw.size()) return {i};
    }
    double d = std::stod(raw, &used);
    if (used == raw.size()) return {d};
  } catch (const std::exception&) {
  }
  throw ConfigError("cannot parse value '" + raw + "' on line " + std::to_string(line_no));
}

}  // namespace

TomlTable TomlTable::parse(const std::string& text) {
  TomlTable out;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      // keep '#' inside quoted strings
      bool in_quote = false;
      for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_quote = !in_quote;
        if (line[i] == '#' && !in_quote) {
          line = line.substr(0, i);
          break;
        }
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("malformed table header on line " + std::to_string(line_no));
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("empty table name on line " + std::to_string(line_no));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected key = value on line " + std::to_string(line_no));
    std::string key = trim(line.substr(0, eq));
    std::string raw = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("empty key on line " + std::to_string(line_no));
    std::string full = section.empty() ? key : section + "." + key;
    if (out.values_.count(full))
      throw ConfigError("duplicate key '" + full + "' on line " + std::to_string(line_no));
    if (!raw.empty() && raw.front() == '[') {
      if (raw.back() != ']')
        throw ConfigError("unterminated array on line " + std::to_string(line_no));
      std::vector<double> arr;
      std::string body = raw.substr(1, raw.size() - 2);
      std::istringstream items(body);
      std::string item;
      while (std::getline(items, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        arr.push_back(parse_scalar(item, line_no).as_double());
      }
      out.values_[full] = TomlValue{arr};
    } else {
      out.values_[full] = parse_scalar(raw, line_no);
    }
  }
  return out;
}

TomlTable TomlTable::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

const TomlValue& TomlTable::at(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key: " + key);
  return it->second;
}

std::string TomlTable::get_string(const std::string& key, const std::string& fallback) const {
  return contains(key) ? at(key).as_string() : fallback;
}
int64_t TomlTable::get_int(const std::string& key, int64_t fallback) const {
  return contains(key) ? at(key).as_int() : fallback;
}
double TomlTable::get_double(const std::string& key, double fallback) const {
  return contains(key) ? at(key).as_double() : fallback;
}
bool TomlTable::get_bool(const std::string& key, bool fallback) const {
  return contains(key) ? at(key).as_bool() : fallback;
}

}  // namespace fcm
