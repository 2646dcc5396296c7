#include "almcflow/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace almcflow {

namespace {

class ValueParser {
 public:
  explicit ValueParser(const std::string& s) : s_(s) {}

  nlohmann::json parse() {
    auto v = value();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("bad value '" + s_ + "': " + what);
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  nlohmann::json value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '[') return array();
    if (c == '"') return quoted();
    return word();
  }

  nlohmann::json array() {
    ++pos_;
    nlohmann::json out = nlohmann::json::array();
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return out;
    }
    while (true) {
      out.push_back(value());
      skip_ws();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ',') {
        ++pos_;
        continue;
      }
      if (s_[pos_] == ']') {
        ++pos_;
        return out;
      }
      fail("expected ',' or ']'");
    }
  }

  nlohmann::json quoted() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) ++pos_;
      out += s_[pos_++];
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  nlohmann::json word() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' &&
           !std::isspace(static_cast<unsigned char>(s_[pos_])))
      ++pos_;
    const std::string w = s_.substr(start, pos_ - start);
    if (w.empty()) fail("empty word");
    if (w == "true") return true;
    if (w == "false") return false;
    double d = 0.0;
    auto res = std::from_chars(w.data(), w.data() + w.size(), d);
    if (res.ec == std::errc() && res.ptr == w.data() + w.size()) {
      if (w.find_first_of(".eE") == std::string::npos && w.find("inf") == std::string::npos &&
          w.find("nan") == std::string::npos) {
        if (w[0] == '-') return static_cast<std::int64_t>(std::stoll(w));
        return static_cast<std::uint64_t>(std::stoull(w));
      }
      return d;
    }
    return w;
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_str = !in_str;
    if (!in_str && line[i] == '#') return line.substr(0, i);
  }
  return line;
}

int bracket_balance(const std::string& s) {
  int depth = 0;
  bool in_str = false;
  for (char c : s) {
    if (c == '"') in_str = !in_str;
    if (in_str) continue;
    if (c == '[') ++depth;
    if (c == ']') --depth;
  }
  return depth;
}

}  // namespace

nlohmann::json parse_config_value(const std::string& text) { return ValueParser(text).parse(); }

ConfigFile ConfigFile::parse(const std::string& text) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[' && line.find('=') == std::string::npos) {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    while (bracket_balance(value) > 0) {
      std::string more;
      if (!std::getline(in, more))
        throw ConfigError("line " + std::to_string(lineno) + ": unterminated array");
      ++lineno;
      value += " " + trim(strip_comment(more));
    }
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    try {
      cfg.values_[full] = parse_config_value(value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return parse(os.str());
}

const nlohmann::json& ConfigFile::at(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key " + key);
  return it->second;
}

double ConfigFile::get_double(const std::string& key) const {
  const auto& v = at(key);
  if (!v.is_number()) throw ConfigError(key + " must be a number");
  return v.get<double>();
}

std::size_t ConfigFile::get_size(const std::string& key) const {
  const auto& v = at(key);
  if (v.is_number_unsigned()) return v.get<std::size_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d >= 0 && std::floor(d) == d) return static_cast<std::size_t>(d);
  }
  throw ConfigError(key + " must be a non-negative integer");
}

std::uint64_t ConfigFile::get_u64(const std::string& key) const { return get_size(key); }

bool ConfigFile::get_bool(const std::string& key) const {
  const auto& v = at(key);
  if (!v.is_boolean()) throw ConfigError(key + " must be true or false");
  return v.get<bool>();
}

std::string ConfigFile::get_string(const std::string& key) const {
  const auto& v = at(key);
  if (!v.is_string()) throw ConfigError(key + " must be a string");
  return v.get<std::string>();
}

std::vector<double> ConfigFile::get_doubles(const std::string& key) const {
  const auto& v = at(key);
  if (!v.is_array()) throw ConfigError(key + " must be an array");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError(key + " must hold numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<std::string> ConfigFile::get_strings(const std::string& key) const {
  const auto& v = at(key);
  if (v.is_string()) return {v.get<std::string>()};
  if (!v.is_array()) throw ConfigError(key + " must be an array");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw ConfigError(key + " must hold words");
    out.push_back(e.get<std::string>());
  }
  return out;
}

std::vector<std::uint64_t> ConfigFile::get_u64s(const std::string& key) const {
  const auto& v = at(key);
  if (!v.is_array()) throw ConfigError(key + " must be an array");
  std::vector<std::uint64_t> out;
  for (const auto& e : v) {
    if (!e.is_number_unsigned()) throw ConfigError(key + " must hold non-negative integers");
    out.push_back(e.get<std::uint64_t>());
  }
  return out;
}

std::vector<std::vector<double>> ConfigFile::get_matrix(const std::string& key) const {
  const auto& v = at(key);
  if (!v.is_array()) throw ConfigError(key + " must be an array of arrays");
  std::vector<std::vector<double>> out;
  for (const auto& row : v) {
    if (!row.is_array()) throw ConfigError(key + " must be an array of arrays");
    std::vector<double> r;
    for (const auto& e : row) {
      if (!e.is_number()) throw ConfigError(key + " must hold numbers");
      r.push_back(e.get<double>());
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace almcflow
