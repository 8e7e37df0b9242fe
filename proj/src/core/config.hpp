#pragma once

#include <map>
#include <string>
#include <vector>

#include "common.hpp"

namespace bondflow {

// Line-oriented config text: `[section]` headers, `key = value` pairs,
// `#` comments. Duplicate keys within a section are an error; keys that
// are never consumed are reported as unknown.
class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text);
  static ConfigFile parse_file(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key);
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback);
  double get_real(const std::string& section, const std::string& key);
  double get_real(const std::string& section, const std::string& key, double fallback);
  long get_int(const std::string& section, const std::string& key);
  long get_int(const std::string& section, const std::string& key, long fallback);
  std::vector<double> get_real_list(const std::string& section, const std::string& key);

  // Every key must have been consumed by a getter by the time this runs.
  void reject_unknown_keys() const;

 private:
  struct Entry {
    std::string value;
    size_t line = 0;
    mutable bool consumed = false;
  };
  std::map<std::string, std::map<std::string, Entry>> sections_;

  const Entry* find(const std::string& section, const std::string& key) const;
  const Entry& require(const std::string& section, const std::string& key);
};

}  // namespace bondflow
