#include "config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace bondflow {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(strfmt("config line %zu: unterminated section header", lineno));
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError(strfmt("config line %zu: empty section name", lineno));
      cfg.sections_[section];  // section may legitimately stay empty
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(strfmt("config line %zu: expected 'key = value'", lineno));
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(strfmt("config line %zu: empty key", lineno));
    if (section.empty())
      throw ConfigError(strfmt("config line %zu: key '%s' outside any section", lineno, key.c_str()));
    auto& sec = cfg.sections_[section];
    if (sec.count(key))
      throw ConfigError(strfmt("config line %zu: duplicate key '%s' in section [%s]",
                               lineno, key.c_str(), section.c_str()));
    sec[key] = Entry{value, lineno, false};
  }
  return cfg;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

const ConfigFile::Entry* ConfigFile::find(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  if (s == sections_.end()) return nullptr;
  auto k = s->second.find(key);
  if (k == s->second.end()) return nullptr;
  return &k->second;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  const Entry* e = find(section, key);
  if (e) e->consumed = true;
  return e != nullptr;
}

const ConfigFile::Entry& ConfigFile::require(const std::string& section, const std::string& key) {
  const Entry* e = find(section, key);
  if (!e)
    throw ConfigError(strfmt("missing key '%s' in section [%s]", key.c_str(), section.c_str()));
  e->consumed = true;
  return *e;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key) {
  return require(section, key).value;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key,
                                   const std::string& fallback) {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  e->consumed = true;
  return e->value;
}

double ConfigFile::get_real(const std::string& section, const std::string& key) {
  const Entry& e = require(section, key);
  char* end = nullptr;
  double v = std::strtod(e.value.c_str(), &end);
  if (end == e.value.c_str() || *end != '\0')
    throw ConfigError(strfmt("config line %zu: key '%s' is not a number: '%s'",
                             e.line, key.c_str(), e.value.c_str()));
  return v;
}

double ConfigFile::get_real(const std::string& section, const std::string& key, double fallback) {
  if (!find(section, key)) return fallback;
  return get_real(section, key);
}

long ConfigFile::get_int(const std::string& section, const std::string& key) {
  const Entry& e = require(section, key);
  char* end = nullptr;
  long v = std::strtol(e.value.c_str(), &end, 10);
  if (end == e.value.c_str() || *end != '\0')
    throw ConfigError(strfmt("config line %zu: key '%s' is not an integer: '%s'",
                             e.line, key.c_str(), e.value.c_str()));
  return v;
}

long ConfigFile::get_int(const std::string& section, const std::string& key, long fallback) {
  if (!find(section, key)) return fallback;
  return get_int(section, key);
}

std::vector<double> ConfigFile::get_real_list(const std::string& section, const std::string& key) {
  const Entry& e = require(section, key);
  std::vector<double> out;
  std::string item;
  std::istringstream ss(e.value);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty())
      throw ConfigError(strfmt("config line %zu: empty element in list '%s'", e.line, key.c_str()));
    char* end = nullptr;
    double v = std::strtod(item.c_str(), &end);
    if (end == item.c_str() || *end != '\0')
      throw ConfigError(strfmt("config line %zu: bad number '%s' in list '%s'",
                               e.line, item.c_str(), key.c_str()));
    out.push_back(v);
  }
  if (out.empty())
    throw ConfigError(strfmt("config line %zu: empty list '%s'", e.line, key.c_str()));
  return out;
}

void ConfigFile::reject_unknown_keys() const {
  for (const auto& [sec, entries] : sections_) {
    for (const auto& [key, e] : entries) {
      if (!e.consumed)
        throw ConfigError(strfmt("config line %zu: unknown key '%s' in section [%s]",
                                 e.line, key.c_str(), sec.c_str()));
    }
  }
}

}  // namespace bondflow
