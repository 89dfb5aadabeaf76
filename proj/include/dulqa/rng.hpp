#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace dulqa {

// Counter-based seed derivation. Every random stream in the project is a pure
// function of (master_seed, purpose, indices), so parallel scheduling cannot
// perturb which numbers a work item sees.

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose,
                                 std::uint64_t a = 0, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
  std::uint64_t s = mix64(master ^ fnv1a64(purpose));
  s = mix64(s ^ a);
  s = mix64(s ^ b);
  return mix64(s ^ c);
}

// A seeded random stream. The engine is std::mt19937_64 (output fully
// specified by the standard); the variate transforms below are spelled out
// explicitly instead of using std::*_distribution, whose output is
// implementation-defined and would break bit-level replay across toolchains.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : eng_(seed) {}
  RngStream(std::uint64_t master, std::string_view purpose, std::uint64_t a = 0,
            std::uint64_t b = 0, std::uint64_t c = 0)
      : eng_(derive_seed(master, purpose, a, b, c)) {}

  std::uint64_t next_u64() { return eng_(); }

  // uniform on [0,1), 53-bit resolution
  double uniform01() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // standard normal via Box-Muller; uses two draws per variate, u1 in (0,1]
  double normal() {
    double u1 = static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53;
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double log_uniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace dulqa
