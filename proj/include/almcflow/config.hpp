#pragma once

// Flat typed key-value config files.
//
//   # comment
//   [section]
//   key = value
//
// Values are numbers, booleans, "quoted strings", bare words, or bracketed
// arrays (nested arrays allowed, may span lines). Keys are addressed as
// "section.key"; keys before any section header live in the empty section.

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace almcflow {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text);
  static ConfigFile load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const nlohmann::json& at(const std::string& key) const;
  const std::map<std::string, nlohmann::json>& values() const { return values_; }

  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::string> get_strings(const std::string& key) const;
  std::vector<std::uint64_t> get_u64s(const std::string& key) const;
  std::vector<std::vector<double>> get_matrix(const std::string& key) const;

 private:
  std::map<std::string, nlohmann::json> values_;
};

/// Parses one value in the config grammar.
nlohmann::json parse_config_value(const std::string& text);

}  // namespace almcflow
