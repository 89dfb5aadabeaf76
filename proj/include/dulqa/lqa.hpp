#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dulqa/errors.hpp"
#include "dulqa/ising.hpp"
#include "dulqa/linalg.hpp"

namespace dulqa {

inline constexpr double kHalfPi = 1.5707963267948966;

// Relaxed spin state. The continuous parameters w are unbounded; the angle
// phi_i = (pi/2) tanh(w_i) stays in (-pi/2, pi/2), so z_i = sin(phi_i) is the
// soft spin and x_i = cos(phi_i) > 0 the transverse weight. tanh(w) is cached
// because every derivative of phi needs it.
struct RelaxedState {
  Eigen::ArrayXd w, tanh_w, z, x;

  RelaxedState() = default;
  explicit RelaxedState(Eigen::ArrayXd w0) { assign(std::move(w0)); }

  int n() const { return static_cast<int>(w.size()); }

  void assign(Eigen::ArrayXd w0) {
    w = std::move(w0);
    tanh_w = w.tanh();
    z = (kHalfPi * tanh_w).sin();
    x = (kHalfPi * tanh_w).cos();
  }

  // dphi/dw
  Eigen::ArrayXd dphi() const { return kHalfPi * (1.0 - tanh_w.square()); }
};

// Per-update schedule: eta(t) and gamma(t) for t = 0..tau.
struct AnnealSchedule {
  Eigen::ArrayXd eta, gamma;

  int tau() const { return static_cast<int>(eta.size()) - 1; }

  static AnnealSchedule constant(int tau, double eta0, double gamma0) {
    if (tau < 0) throw std::invalid_argument("AnnealSchedule: tau must be >= 0");
    AnnealSchedule s;
    s.eta = Eigen::ArrayXd::Constant(tau + 1, eta0);
    s.gamma = Eigen::ArrayXd::Constant(tau + 1, gamma0);
    s.validate();
    return s;
  }

  void validate() const {
    if (eta.size() < 1 || eta.size() != gamma.size())
      throw std::invalid_argument("AnnealSchedule: eta/gamma must share length tau+1");
    if (!eta.isFinite().all() || !gamma.isFinite().all() ||
        (eta <= 0.0).any() || (gamma <= 0.0).any())
      throw std::invalid_argument("AnnealSchedule: entries must be finite and > 0");
  }
};

inline void check_s(double s) {
  if (!(s >= 0.0 && s <= 1.0))
    throw std::domain_error("annealing parameter s must be in [0,1], got " +
                            std::to_string(s));
}

inline void check_dims(const RelaxedState& st, const IsingInstance& inst) {
  if (st.w.size() != inst.fields.size())
    throw std::invalid_argument("state/instance size mismatch");
}

// C(w) = s*gamma*(z^T J z + h^T z) - (1-s) * sum_i x_i
inline double cost(const RelaxedState& st, const IsingInstance& inst, double s,
                   double gamma) {
  check_dims(st, inst);
  check_s(s);
  const Eigen::ArrayXd jz = matvec(inst.couplings, st.z);
  return s * gamma * (dot(st.z, jz) + dot(inst.fields, st.z)) -
         (1.0 - s) * sum(st.x);
}

// dC/dw_i = [s*gamma*(2 (Jz)_i + h_i) x_i + (1-s) z_i] * dphi_i
inline Eigen::ArrayXd cost_gradient(const RelaxedState& st,
                                    const IsingInstance& inst, double s,
                                    double gamma) {
  check_dims(st, inst);
  check_s(s);
  const Eigen::ArrayXd jz = matvec(inst.couplings, st.z);
  return (s * gamma * (2.0 * jz + inst.fields) * st.x + (1.0 - s) * st.z) *
         st.dphi();
}

// Hessian-vector product, never materializing the Hessian:
//   (H v)_i = 2 s gamma (x a)_i (J (x a v))_i + d_i v_i
// with a = dphi/dw and the diagonal collecting the curvature of phi(w):
//   d2z/dw2 = -z a^2 - 2 tanh(w) x a,   d2x/dw2 = -x a^2 + 2 tanh(w) z a.
inline Eigen::ArrayXd cost_hvp(const RelaxedState& st, const IsingInstance& inst,
                               double s, double gamma, const Eigen::ArrayXd& v) {
  check_dims(st, inst);
  check_s(s);
  if (v.size() != st.w.size())
    throw std::invalid_argument("cost_hvp: vector size mismatch");
  const Eigen::ArrayXd a = st.dphi();
  const Eigen::ArrayXd xa = st.x * a;
  const Eigen::ArrayXd jz = matvec(inst.couplings, st.z);
  const Eigen::ArrayXd jxav = matvec(inst.couplings, xa * v);
  const Eigen::ArrayXd d2z = -st.z * a.square() - 2.0 * st.tanh_w * xa;
  const Eigen::ArrayXd d2x = -st.x * a.square() + 2.0 * st.tanh_w * st.z * a;
  const Eigen::ArrayXd diag =
      s * gamma * (2.0 * jz + inst.fields) * d2z - (1.0 - s) * d2x;
  return 2.0 * s * gamma * xa * jxav + diag * v;
}

// d/dgamma of the gradient: s*(2 (Jz)_i + h_i) x_i * dphi_i
inline Eigen::ArrayXd cost_grad_dgamma(const RelaxedState& st,
                                       const IsingInstance& inst, double s,
                                       double gamma) {
  check_dims(st, inst);
  check_s(s);
  (void)gamma;  // C is linear in gamma
  const Eigen::ArrayXd jz = matvec(inst.couplings, st.z);
  return s * (2.0 * jz + inst.fields) * st.x * st.dphi();
}

// dC/dgamma = s*(z^T J z + h^T z)
inline double cost_dgamma(const RelaxedState& st, const IsingInstance& inst,
                          double s, double gamma) {
  check_dims(st, inst);
  check_s(s);
  (void)gamma;
  const Eigen::ArrayXd jz = matvec(inst.couplings, st.z);
  return s * (dot(st.z, jz) + dot(inst.fields, st.z));
}

// sigma_i = +1 if w_i >= 0 else -1 (zero maps to +1).
inline SpinConfig sign_readout(const Eigen::ArrayXd& w) {
  Eigen::ArrayXd s(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) s[i] = w[i] >= 0.0 ? 1.0 : -1.0;
  return SpinConfig{std::move(s)};
}

// Observables along a rollout. Entry t in 0..tau+1 describes the state w(t):
// entries t <= tau carry the (s, gamma) of the update about to be applied,
// entry tau+1 evaluates the final state at s = 1, gamma(tau).
struct TrajectoryRecord {
  std::vector<double> s;
  std::vector<double> e_w_per_spin;
  std::vector<double> e_ising_per_spin;
  std::vector<Eigen::ArrayXd> snapshots;  // w(0..tau+1) when requested
  Eigen::ArrayXd final_w;

  int steps() const { return static_cast<int>(s.size()); }

  std::string to_csv_rows(int restart) const {
    std::string out;
    for (std::size_t t = 0; t < s.size(); ++t) {
      out += std::to_string(restart);
      out += ',';
      out += std::to_string(t);
      out += ',';
      out += g17(s[t]);
      out += ',';
      out += g17(e_w_per_spin[t]);
      out += ',';
      out += g17(e_ising_per_spin[t]);
      out += '\n';
    }
    return out;
  }
};

struct RolloutOptions {
  bool record_snapshots = false;
  bool record_observables = true;
};

namespace detail {

inline void check_sane(const Eigen::ArrayXd& w, int step) {
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double v = w[i];
    if (!std::isfinite(v) || std::abs(v) > 1e6) {
      const std::string where =
          step < 0 ? "in the initial state" : "at step " + std::to_string(step);
      throw divergence_error(step, "rollout diverged " + where + ": w_" +
                                       std::to_string(i) + " = " +
                                       std::to_string(v));
    }
  }
}

inline double s_of(int t, int tau) {
  if (tau == 0) return 0.0;  // single pure-transverse update
  return static_cast<double>(t) / static_cast<double>(tau);
}

}  // namespace detail

// Gradient-descent anneal: w(t+1) = w(t) - eta(t) grad C(w(t), s(t), gamma(t))
// for t = 0..tau with s(t) = t/tau, i.e. tau+1 updates from s=0 to s=1.
inline TrajectoryRecord lqa_run(const IsingInstance& inst,
                                const Eigen::ArrayXd& w0,
                                const AnnealSchedule& sched,
                                const RolloutOptions& opts = {}) {
  sched.validate();
  const int tau = sched.tau();
  const int n = inst.n();
  if (w0.size() != n) throw std::invalid_argument("lqa_run: w0 size mismatch");

  TrajectoryRecord rec;
  if (opts.record_observables) {
    rec.s.reserve(tau + 2);
    rec.e_w_per_spin.reserve(tau + 2);
    rec.e_ising_per_spin.reserve(tau + 2);
  }
  if (opts.record_snapshots) rec.snapshots.reserve(tau + 2);

  RelaxedState st(w0);
  detail::check_sane(st.w, -1);

  auto record = [&](double s, double gamma) {
    if (opts.record_snapshots) rec.snapshots.push_back(st.w);
    if (!opts.record_observables) return;
    rec.s.push_back(s);
    rec.e_w_per_spin.push_back(cost(st, inst, s, gamma) / n);
    rec.e_ising_per_spin.push_back(ising_energy(inst, sign_readout(st.w)) / n);
  };

  for (int t = 0; t <= tau; ++t) {
    const double s = detail::s_of(t, tau);
    record(s, sched.gamma[t]);
    st.assign(st.w - sched.eta[t] * cost_gradient(st, inst, s, sched.gamma[t]));
    detail::check_sane(st.w, t);
  }
  record(1.0, sched.gamma[tau]);
  rec.final_w = st.w;
  return rec;
}

// Same anneal but with Adam as the inner optimizer (standard defaults,
// bias correction on), constant gamma.
inline TrajectoryRecord lqa_adam_run(const IsingInstance& inst,
                                     const Eigen::ArrayXd& w0, int tau,
                                     double step_size, double gamma,
                                     const RolloutOptions& opts = {}) {
  if (tau < 1) throw std::invalid_argument("lqa_adam_run: tau must be >= 1");
  if (!(step_size > 0.0))
    throw std::invalid_argument("lqa_adam_run: step_size must be > 0");
  const int n = inst.n();
  if (w0.size() != n) throw std::invalid_argument("lqa_adam_run: w0 size mismatch");

  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  TrajectoryRecord rec;
  RelaxedState st(w0);
  detail::check_sane(st.w, -1);
  Eigen::ArrayXd m = Eigen::ArrayXd::Zero(n);
  Eigen::ArrayXd v = Eigen::ArrayXd::Zero(n);

  auto record = [&](double s) {
    if (opts.record_snapshots) rec.snapshots.push_back(st.w);
    if (!opts.record_observables) return;
    rec.s.push_back(s);
    rec.e_w_per_spin.push_back(cost(st, inst, s, gamma) / n);
    rec.e_ising_per_spin.push_back(ising_energy(inst, sign_readout(st.w)) / n);
  };

  for (int t = 0; t <= tau; ++t) {
    const double s = detail::s_of(t, tau);
    record(s);
    const Eigen::ArrayXd g = cost_gradient(st, inst, s, gamma);
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.square();
    const double mc = 1.0 - std::pow(beta1, t + 1);
    const double vc = 1.0 - std::pow(beta2, t + 1);
    st.assign(st.w - step_size * (m / mc) / ((v / vc).sqrt() + eps));
    detail::check_sane(st.w, t);
  }
  record(1.0);
  rec.final_w = st.w;
  return rec;
}

}  // namespace dulqa
