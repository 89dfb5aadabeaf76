#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dulqa {

// Flat key=value config files. '#' starts a comment, blank lines ignored.
// There are deliberately no implicit defaults for seeds: get_* with no
// fallback throws when the key is missing.
class Config {
 public:
  static Config parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path);
  }

  static Config parse_string(const std::string& text,
                             const std::string& origin = "<string>") {
    Config cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                    ": expected key=value, got '" + trimmed + "'");
      cfg.values_[trim(trimmed.substr(0, eq))] = trim(trimmed.substr(eq + 1));
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw missing(key);
    return it->second;
  }
  std::string get_string(const std::string& key, const std::string& dflt) const {
    auto it = values_.find(key);
    return it == values_.end() ? dflt : it->second;
  }

  long long get_int(const std::string& key) const { return to_int(key, get_string(key)); }
  long long get_int(const std::string& key, long long dflt) const {
    return has(key) ? get_int(key) : dflt;
  }

  std::uint64_t get_u64(const std::string& key) const {
    const std::string s = get_string(key);
    try {
      std::size_t pos = 0;
      std::uint64_t v = std::stoull(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument(origin_ + ": key '" + key +
                                  "' is not an unsigned integer: '" + s + "'");
    }
  }

  double get_double(const std::string& key) const {
    const std::string s = get_string(key);
    try {
      std::size_t pos = 0;
      double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument(origin_ + ": key '" + key +
                                  "' is not a number: '" + s + "'");
    }
  }
  double get_double(const std::string& key, double dflt) const {
    return has(key) ? get_double(key) : dflt;
  }

  bool get_bool(const std::string& key, bool dflt) const {
    if (!has(key)) return dflt;
    const std::string s = get_string(key);
    if (s == "1" || s == "true" || s == "on") return true;
    if (s == "0" || s == "false" || s == "off") return false;
    throw std::invalid_argument(origin_ + ": key '" + key +
                                "' is not a boolean: '" + s + "'");
  }

  std::vector<std::string> get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::istringstream in(get_string(key));
    std::string item;
    while (std::getline(in, item, ',')) {
      const std::string t = trim(item);
      if (!t.empty()) out.push_back(t);
    }
    return out;
  }

  std::vector<long long> get_int_list(const std::string& key) const {
    std::vector<long long> out;
    for (const auto& s : get_list(key)) out.push_back(to_int(key, s));
    return out;
  }

  const std::map<std::string, std::string>& items() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::invalid_argument missing(const std::string& key) const {
    return std::invalid_argument(origin_ + ": missing required key '" + key + "'");
  }

  long long to_int(const std::string& key, const std::string& s) const {
    try {
      std::size_t pos = 0;
      long long v = std::stoll(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument(origin_ + ": key '" + key +
                                  "' is not an integer: '" + s + "'");
    }
  }

  std::map<std::string, std::string> values_;
  std::string origin_;
};

}  // namespace dulqa
