#include "dmatch/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dmatch {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(const std::string& origin, int lineno, const std::string& what) {
  throw std::invalid_argument("config " + origin + ":" + std::to_string(lineno) + ": " + what);
}

}  // namespace

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str(), path);
}

Config Config::parse_string(const std::string& text, const std::string& origin) {
  Config cfg;
  std::stringstream ss(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') fail(origin, lineno, "unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) fail(origin, lineno, "empty section name");
      if (cfg.values_.count(section)) fail(origin, lineno, "duplicate section [" + section + "]");
      cfg.values_[section];
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos) fail(origin, lineno, "expected key = value");
    if (section.empty()) fail(origin, lineno, "key outside any [section]");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) fail(origin, lineno, "empty key");
    if (key.find_first_of(" \t[]") != std::string::npos)
      fail(origin, lineno, "invalid key '" + key + "'");
    auto& sect = cfg.values_[section];
    if (sect.count(key)) fail(origin, lineno, "duplicate key '" + section + "." + key + "'");
    sect[key] = value;
  }
  return cfg;
}

const std::string* Config::find(const std::string& section, const std::string& key) const {
  auto s = values_.find(section);
  if (s == values_.end()) return nullptr;
  auto k = s->second.find(key);
  if (k == s->second.end()) return nullptr;
  consumed_.insert(section + "." + key);
  return &k->second;
}

bool Config::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
  values_[section][key] = value;
}

std::string Config::get_string(const std::string& section, const std::string& key) const {
  const std::string* v = find(section, key);
  if (!v) throw std::invalid_argument("config: missing required key '" + section + "." + key + "'");
  return *v;
}

std::string Config::get_string_or(const std::string& section, const std::string& key,
                                  const std::string& fallback) const {
  const std::string* v = find(section, key);
  return v ? *v : fallback;
}

namespace {

double parse_double_strict(const std::string& s, const std::string& where) {
  if (s.empty()) throw std::invalid_argument("config: empty number for '" + where + "'");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size())
    throw std::invalid_argument("config: bad number '" + s + "' for '" + where + "'");
  return v;
}

long long parse_int_strict(const std::string& s, const std::string& where) {
  if (s.empty()) throw std::invalid_argument("config: empty integer for '" + where + "'");
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size())
    throw std::invalid_argument("config: bad integer '" + s + "' for '" + where + "'");
  return v;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, ',')) {
    size_t a = item.find_first_not_of(" \t");
    size_t b = item.find_last_not_of(" \t");
    out.push_back(a == std::string::npos ? "" : item.substr(a, b - a + 1));
  }
  return out;
}

}  // namespace

double Config::get_double(const std::string& section, const std::string& key) const {
  return parse_double_strict(get_string(section, key), section + "." + key);
}

double Config::get_double_or(const std::string& section, const std::string& key,
                             double fallback) const {
  const std::string* v = find(section, key);
  return v ? parse_double_strict(*v, section + "." + key) : fallback;
}

int Config::get_int(const std::string& section, const std::string& key) const {
  return static_cast<int>(parse_int_strict(get_string(section, key), section + "." + key));
}

int Config::get_int_or(const std::string& section, const std::string& key, int fallback) const {
  const std::string* v = find(section, key);
  return v ? static_cast<int>(parse_int_strict(*v, section + "." + key)) : fallback;
}

std::uint64_t Config::get_uint64_or(const std::string& section, const std::string& key,
                                    std::uint64_t fallback) const {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  const long long parsed = parse_int_strict(*v, section + "." + key);
  if (parsed < 0)
    throw std::invalid_argument("config: negative value for '" + section + "." + key + "'");
  return static_cast<std::uint64_t>(parsed);
}

bool Config::get_bool_or(const std::string& section, const std::string& key, bool fallback) const {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  throw std::invalid_argument("config: bad boolean '" + *v + "' for '" + section + "." + key +
                              "' (use true/false)");
}

std::vector<double> Config::get_double_list_or(const std::string& section, const std::string& key,
                                               const std::vector<double>& fallback) const {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(*v))
    out.push_back(parse_double_strict(item, section + "." + key));
  return out;
}

std::vector<int> Config::get_int_list_or(const std::string& section, const std::string& key,
                                         const std::vector<int>& fallback) const {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  std::vector<int> out;
  for (const auto& item : split_list(*v))
    out.push_back(static_cast<int>(parse_int_strict(item, section + "." + key)));
  return out;
}

std::vector<std::string> Config::get_string_list_or(
    const std::string& section, const std::string& key,
    const std::vector<std::string>& fallback) const {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  return split_list(*v);
}

void Config::require_all_consumed() const {
  std::string unknown;
  for (const auto& [section, keys] : values_)
    for (const auto& [key, value] : keys)
      if (!consumed_.count(section + "." + key)) unknown += " " + section + "." + key;
  if (!unknown.empty())
    throw std::invalid_argument("config: unknown key(s):" + unknown);
}

std::string Config::hash() const {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a offset basis
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  for (const auto& [section, keys] : values_)
    for (const auto& [key, value] : keys) mix(section + "." + key + "=" + value + "\n");
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dmatch
