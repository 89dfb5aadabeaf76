#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dulqa/io.hpp"
#include "dulqa/linalg.hpp"
#include "dulqa/rng.hpp"

namespace dulqa {

// A fully stored Ising problem: symmetric couplings with zero diagonal and
// local fields. Energies use the doubled pair convention E = s^T J s + h^T s
// (every pair counted twice through the symmetric matrix), so the
// thermodynamic SK ground-state density is -1.526 per spin.
struct IsingInstance {
  Eigen::MatrixXd couplings;  // n x n, symmetric, zero diagonal
  Eigen::ArrayXd fields;      // n

  int n() const { return static_cast<int>(fields.size()); }

  static IsingInstance make(Eigen::MatrixXd J, Eigen::ArrayXd h) {
    IsingInstance inst{std::move(J), std::move(h)};
    inst.validate();
    return inst;
  }

  void validate() const {
    const Eigen::Index n = fields.size();
    if (n < 1) throw std::invalid_argument("IsingInstance: n must be >= 1");
    if (couplings.rows() != n || couplings.cols() != n)
      throw std::invalid_argument("IsingInstance: couplings must be n x n");
    if (!couplings.allFinite() || !fields.isFinite().all())
      throw std::invalid_argument("IsingInstance: entries must be finite");
    for (Eigen::Index i = 0; i < n; ++i) {
      if (couplings(i, i) != 0.0)
        throw std::invalid_argument("IsingInstance: diagonal must be zero");
      for (Eigen::Index j = i + 1; j < n; ++j)
        if (couplings(i, j) != couplings(j, i))
          throw std::invalid_argument("IsingInstance: couplings must be symmetric");
    }
  }
};

// sigma with entries exactly -1 or +1, stored as doubles for energy math.
struct SpinConfig {
  Eigen::ArrayXd spins;

  int n() const { return static_cast<int>(spins.size()); }

  void validate() const {
    for (Eigen::Index i = 0; i < spins.size(); ++i)
      if (spins[i] != 1.0 && spins[i] != -1.0)
        throw std::invalid_argument("SpinConfig: entries must be -1 or +1");
  }
};

struct GroundTruth {
  double energy = 0.0;
  SpinConfig config;
  enum class Method { exhaustive } method = Method::exhaustive;
};

// E = sigma^T J sigma + h^T sigma. Accumulation order is fixed: outer i
// ascending, the row term summed over j ascending (J column i, which equals
// row i by symmetry), then the field sum over i ascending.
inline double ising_energy(const IsingInstance& inst, const SpinConfig& sigma) {
  const Eigen::Index n = inst.fields.size();
  if (sigma.spins.size() != n)
    throw std::invalid_argument("ising_energy: spin/instance size mismatch");
  double e = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double row = 0.0;
    const double* col = inst.couplings.col(i).data();
    for (Eigen::Index j = 0; j < n; ++j) row += col[j] * sigma.spins[j];
    e += sigma.spins[i] * row;
  }
  for (Eigen::Index i = 0; i < n; ++i) e += inst.fields[i] * sigma.spins[i];
  return e;
}

// Sherrington-Kirkpatrick instance: J_ij = J_ji = g_ij / sqrt(n) with
// g_ij ~ N(0,1) drawn over the upper triangle in row-major order, h = 0.
inline IsingInstance generate_sk(int n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("generate_sk: n must be >= 2");
  RngStream rng(seed, "generate_sk");
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double v = rng.normal() * scale;
      J(i, j) = v;
      J(j, i) = v;
    }
  return IsingInstance{std::move(J), Eigen::ArrayXd::Zero(n)};
}

// Exhaustive ground-state scan over all 2^n configurations.
//
// Configuration index k maps bit i set -> sigma_i = -1 (k = 0 is all +1).
// The scan walks a Gray code so each step flips one spin and updates the
// energy in O(n); ties on the incrementally tracked energy keep the lowest k.
// The returned energy is recomputed exactly with ising_energy.
inline GroundTruth brute_force_ground_state(const IsingInstance& inst) {
  const int n = inst.n();
  if (n > 24)
    throw std::invalid_argument(
        "brute_force_ground_state: refusing n > 24 (got n=" + std::to_string(n) + ")");

  Eigen::ArrayXd sigma = Eigen::ArrayXd::Ones(n);
  Eigen::ArrayXd local = matvec(inst.couplings, sigma);  // (J sigma)_i
  double e = ising_energy(inst, SpinConfig{sigma});

  double best_e = e;
  std::uint64_t best_k = 0;
  const std::uint64_t total = std::uint64_t{1} << n;
  std::uint64_t gray = 0;
  for (std::uint64_t step = 1; step < total; ++step) {
    const std::uint64_t next_gray = step ^ (step >> 1);
    const std::uint64_t diff = gray ^ next_gray;
    int bit = 0;
    while (!((diff >> bit) & 1)) ++bit;
    gray = next_gray;
    // flip spin `bit`
    e += -2.0 * sigma[bit] * (2.0 * local[bit] + inst.fields[bit]);
    const double old_s = sigma[bit];
    sigma[bit] = -old_s;
    for (int j = 0; j < n; ++j) local[j] -= 2.0 * inst.couplings(j, bit) * old_s;
    if (e < best_e || (e == best_e && gray < best_k)) {
      best_e = e;
      best_k = gray;
    }
  }

  Eigen::ArrayXd best = Eigen::ArrayXd::Ones(n);
  for (int i = 0; i < n; ++i)
    if ((best_k >> i) & 1) best[i] = -1.0;
  SpinConfig cfg{std::move(best)};
  return GroundTruth{ising_energy(inst, cfg), std::move(cfg),
                     GroundTruth::Method::exhaustive};
}

// --- instance file format -------------------------------------------------
// Text, UTF-8. '#' lines are comments. Directives:
//   n <int>
//   J <i> <j> <value>     0-based, i < j, one line per upper-triangle nonzero
//   h <i> <value>         optional
// Values are written with %.17g and round-trip exactly.

inline std::string format_instance(const IsingInstance& inst,
                                   const std::string& header = "") {
  std::ostringstream out;
  out << header;
  const int n = inst.n();
  out << "n " << n << "\n";
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (inst.couplings(i, j) != 0.0)
        out << "J " << i << " " << j << " " << g17(inst.couplings(i, j)) << "\n";
  for (int i = 0; i < n; ++i)
    if (inst.fields[i] != 0.0)
      out << "h " << i << " " << g17(inst.fields[i]) << "\n";
  return out.str();
}

inline void write_instance(const std::string& path, const IsingInstance& inst,
                           const std::string& header = "") {
  write_file(path, format_instance(inst, header));
}

inline IsingInstance parse_instance(std::istream& in, const std::string& origin) {
  std::string line;
  int lineno = 0;
  int n = -1;
  Eigen::MatrixXd J;
  Eigen::ArrayXd h;
  auto fail = [&](const std::string& msg) {
    throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag.empty()) continue;
    if (tag == "n") {
      if (!(ls >> n) || n < 1) fail("bad n directive");
      J = Eigen::MatrixXd::Zero(n, n);
      h = Eigen::ArrayXd::Zero(n);
    } else if (tag == "J") {
      if (n < 0) fail("J before n");
      int i, j;
      double v;
      if (!(ls >> i >> j >> v)) fail("bad J directive");
      if (i < 0 || j < 0 || i >= n || j >= n || i >= j) fail("bad J indices");
      J(i, j) = v;
      J(j, i) = v;
    } else if (tag == "h") {
      if (n < 0) fail("h before n");
      int i;
      double v;
      if (!(ls >> i >> v)) fail("bad h directive");
      if (i < 0 || i >= n) fail("bad h index");
      h[i] = v;
    } else {
      fail("unknown directive '" + tag + "'");
    }
  }
  if (n < 0) throw std::invalid_argument(origin + ": no 'n' directive found");
  return IsingInstance::make(std::move(J), std::move(h));
}

inline IsingInstance read_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open instance file: " + path);
  return parse_instance(in, path);
}

}  // namespace dulqa
