#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dulqa/rng.hpp"
#include "dulqa/version.hpp"

namespace dulqa {

// %.17g round-trips every finite double exactly.
inline std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::uint64_t fnv1a64_bytes(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::uint64_t fnv1a64_file(const std::string& path) {
  return fnv1a64_bytes(read_file(path));
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot write file: " + path);
  out << content;
}

// Standard header comment block embedded at the top of every generated file:
// tool version, master seed, and one hash line per input file.
inline std::string file_header(std::uint64_t master_seed,
                               const std::vector<std::string>& input_paths) {
  std::ostringstream ss;
  ss << "# dulqa version=" << kVersion << "\n";
  ss << "# master_seed=" << master_seed << "\n";
  for (const auto& p : input_paths)
    ss << "# input " << p << " fnv64=" << hex64(fnv1a64_file(p)) << "\n";
  return ss.str();
}

}  // namespace dulqa
