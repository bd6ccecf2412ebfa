#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace dmatch {

// Flat sectioned key-value config:
//   # comment
//   [section]
//   key = value
// Strict on duplicates and syntax. Every key an experiment does not consume
// is treated as a typo: require_all_consumed() throws after setup, which is
// how unknown keys are rejected without a central schema table.
class Config {
 public:
  Config() = default;
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text, const std::string& origin = "<string>");

  // Lookup marks the key as consumed. _or variants fall back when the key is
  // absent (an absent key is not an error; a present-but-malformed value is).
  std::string get_string(const std::string& section, const std::string& key) const;
  std::string get_string_or(const std::string& section, const std::string& key,
                            const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key) const;
  double get_double_or(const std::string& section, const std::string& key, double fallback) const;
  int get_int(const std::string& section, const std::string& key) const;
  int get_int_or(const std::string& section, const std::string& key, int fallback) const;
  std::uint64_t get_uint64_or(const std::string& section, const std::string& key,
                              std::uint64_t fallback) const;
  bool get_bool_or(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<double> get_double_list_or(const std::string& section, const std::string& key,
                                         const std::vector<double>& fallback) const;
  std::vector<int> get_int_list_or(const std::string& section, const std::string& key,
                                   const std::vector<int>& fallback) const;
  std::vector<std::string> get_string_list_or(const std::string& section, const std::string& key,
                                              const std::vector<std::string>& fallback) const;

  bool has(const std::string& section, const std::string& key) const;  // marks consumed
  void set(const std::string& section, const std::string& key, const std::string& value);

  // Throws listing every never-consumed key (the unknown-key guard).
  void require_all_consumed() const;

  // FNV-1a over the canonical "section.key=value" listing in sorted order, so
  // formatting and comments do not affect provenance.
  std::string hash() const;

 private:
  const std::string* find(const std::string& section, const std::string& key) const;
  std::map<std::string, std::map<std::string, std::string>> values_;
  mutable std::set<std::string> consumed_;  // "section.key"
};

}  // namespace dmatch
