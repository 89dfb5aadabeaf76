#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dulqa/hypersearch.hpp"
#include "dulqa/io.hpp"
#include "dulqa/ising.hpp"
#include "dulqa/lqa.hpp"
#include "dulqa/parallel.hpp"
#include "dulqa/rng.hpp"
#include "dulqa/train.hpp"
#include "dulqa/version.hpp"

namespace dulqa {

// SK ground-state energy density in the thermodynamic limit (Parisi value,
// doubled because the energy here counts both triangles of J).
inline constexpr double kSkGroundStateEnergy = -1.526;

// Published large-scale scaling exponents, recorded in manifests as reference
// targets only; desk-scale runs are not expected to reproduce them.
inline constexpr double kRefOmegaResidual = 0.623;
inline constexpr double kRefOmegaSd = 0.694;

struct SolverSpec {
  enum class Kind { dulqa, lqa_gd, lqa_adam };
  Kind kind = Kind::lqa_gd;
  std::string label;
  std::string checkpoint;                          // dulqa: file to load
  std::shared_ptr<const AnnealSchedule> schedule;  // dulqa: in-memory override
  double param = 0.0;  // baselines: eta / Adam step size; <= 0 requests tuning

  void validate() const {
    if (label.empty()) throw std::invalid_argument("SolverSpec: empty label");
    if (kind == Kind::dulqa && checkpoint.empty() && !schedule)
      throw std::invalid_argument("solver " + label + ": dulqa needs a checkpoint");
  }

  std::shared_ptr<const AnnealSchedule> resolve_schedule() const {
    if (schedule) return schedule;
    return std::make_shared<const AnnealSchedule>(read_checkpoint(checkpoint));
  }
};

inline const char* solver_kind_name(SolverSpec::Kind k) {
  switch (k) {
    case SolverSpec::Kind::dulqa: return "dulqa";
    case SolverSpec::Kind::lqa_gd: return "lqa_gd";
    case SolverSpec::Kind::lqa_adam: return "lqa_adam";
  }
  return "?";
}

struct ExperimentSpec {
  enum class Kind { trajectory, crossover, generalization, scaling };
  Kind kind = Kind::trajectory;
  std::vector<int> sizes;        // problem sizes n
  int tau = 20;                  // schedule length for baselines / checkpoints
  std::vector<int> taus;         // crossover sweep
  int restarts = 1;
  int instances = 1;             // test instances per size
  int tune_budget = 50;
  int tune_restarts = 20;
  double f = 0.5;
  double gamma = 1.0;            // baseline coupling strength (held constant)
  std::uint64_t master_seed = 0;
  std::string instance_path;     // optional fixed instance (single-instance kinds)
  bool exact_gs = false;         // scaling: brute-force E_GS per instance
  int threads = 1;
  std::vector<SolverSpec> solvers;

  void validate() const {
    if (solvers.empty()) throw std::invalid_argument("ExperimentSpec: solver roster is empty");
    for (const auto& s : solvers) s.validate();
    if (sizes.empty()) throw std::invalid_argument("ExperimentSpec: no sizes");
    for (int n : sizes)
      if (n < 2) throw std::invalid_argument("ExperimentSpec: sizes must be >= 2");
    if (tau < 0) throw std::invalid_argument("ExperimentSpec: tau must be >= 0");
    if (restarts < 1) throw std::invalid_argument("ExperimentSpec: restarts must be >= 1");
    if (instances < 1) throw std::invalid_argument("ExperimentSpec: instances must be >= 1");
    if (tune_budget < 1) throw std::invalid_argument("ExperimentSpec: tune_budget must be >= 1");
    if (tune_restarts < 1)
      throw std::invalid_argument("ExperimentSpec: tune_restarts must be >= 1");
    if (!(f > 0.0)) throw std::invalid_argument("ExperimentSpec: f must be > 0");
    if (!(gamma > 0.0)) throw std::invalid_argument("ExperimentSpec: gamma must be > 0");
    if (threads < 1) throw std::invalid_argument("ExperimentSpec: threads must be >= 1");
    if (kind == Kind::crossover && taus.empty())
      throw std::invalid_argument("ExperimentSpec: crossover needs a tau sweep");
    if (kind == Kind::scaling && exact_gs)
      for (int n : sizes)
        if (n > 24)
          throw std::invalid_argument("ExperimentSpec: exact_gs requires n <= 24");
  }
};

namespace detail {

// Test instances and starting points are keyed by (size index, instance
// index, restart), independent of the training streams, so bench instances
// are held out by construction.
inline std::shared_ptr<const IsingInstance> bench_instance(const ExperimentSpec& spec,
                                                           int size_idx, int inst_idx,
                                                           int n) {
  if (!spec.instance_path.empty() && size_idx == 0 && inst_idx == 0)
    return std::make_shared<const IsingInstance>(read_instance(spec.instance_path));
  return std::make_shared<const IsingInstance>(generate_sk(
      n, derive_seed(spec.master_seed, "bench_inst", static_cast<std::uint64_t>(size_idx),
                     static_cast<std::uint64_t>(inst_idx))));
}

inline Eigen::ArrayXd bench_w0(const ExperimentSpec& spec, int size_idx, int inst_idx,
                               int restart, int n) {
  RngStream rng(spec.master_seed, "bench_w0", static_cast<std::uint64_t>(size_idx),
                static_cast<std::uint64_t>(inst_idx), static_cast<std::uint64_t>(restart));
  return init_w0(n, spec.f, rng);
}

inline TrajectoryRecord solve_once(const SolverSpec& solver,
                                   const AnnealSchedule* sched, double param,
                                   const IsingInstance& inst, const Eigen::ArrayXd& w0,
                                   int tau, double gamma, const RolloutOptions& opts) {
  switch (solver.kind) {
    case SolverSpec::Kind::dulqa:
      return lqa_run(inst, w0, *sched, opts);
    case SolverSpec::Kind::lqa_gd:
      return lqa_run(inst, w0, AnnealSchedule::constant(tau, param, gamma), opts);
    case SolverSpec::Kind::lqa_adam:
      return lqa_adam_run(inst, w0, tau, param, gamma, opts);
  }
  throw std::logic_error("unreachable");
}

// Tuned eta / step size for a baseline on the given instances; solvers with a
// fixed param skip the search. Seeds are keyed per (solver, context) by the
// caller so every tuning run is replayable.
inline double tuned_param(const SolverSpec& solver,
                          std::vector<std::shared_ptr<const IsingInstance>> insts,
                          const ExperimentSpec& spec, int tau, std::uint64_t seed,
                          int threads) {
  if (solver.param > 0.0) return solver.param;
  TuneProblem prob =
      TuneProblem::make(std::move(insts), spec.tune_restarts, spec.f, tau, seed);
  prob.gamma = spec.gamma;
  const SearchResult res = solver.kind == SolverSpec::Kind::lqa_adam
                               ? tune_lqa_adam(prob, spec.tune_budget, seed, threads)
                               : tune_lqa_gd(prob, spec.tune_budget, seed, threads);
  return res.best().params.begin()->second;
}

// population mean and SD, accumulated in ascending index order
inline std::pair<double, double> mean_sd(const std::vector<double>& xs) {
  const double k = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= k;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / k)};
}

inline void check_tau_match(const std::string& label, int checkpoint_tau, int want) {
  if (checkpoint_tau != want)
    throw std::invalid_argument("solver " + label + ": checkpoint tau " +
                                std::to_string(checkpoint_tau) +
                                " does not match requested tau " + std::to_string(want));
}

}  // namespace detail

// --- trajectory (Fig. 3 style) ----------------------------------------------

struct TrajectoryExpRow {
  std::string solver;
  int t = 0;
  double s = 0.0;
  double mean_e_w = 0.0, sd_e_w = 0.0;
  double mean_e_ising = 0.0, sd_e_ising = 0.0;
};

struct TrajectoryExpResult {
  std::vector<TrajectoryExpRow> rows;  // solver-major, t ascending
  std::map<std::string, double> tuned; // label -> tuned eta / step size

  std::string csv(const std::string& header = "") const {
    std::ostringstream out;
    out << header << "solver,t,s,mean_e_w,sd_e_w,mean_e_ising,sd_e_ising,ref\n";
    for (const auto& r : rows)
      out << r.solver << "," << r.t << "," << g17(r.s) << "," << g17(r.mean_e_w) << ","
          << g17(r.sd_e_w) << "," << g17(r.mean_e_ising) << "," << g17(r.sd_e_ising)
          << "," << g17(-(1.0 - r.s)) << "\n";
    return out.str();
  }
};

// Per-solver statistics over `restarts` runs on one fixed instance. All
// solvers see the same starting points; the ref column is the transverse-term
// ground-state density -(1-s(t)).
inline TrajectoryExpResult trajectory_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const int n = spec.sizes.at(0);
  const auto inst = detail::bench_instance(spec, 0, 0, n);

  TrajectoryExpResult res;
  std::vector<Eigen::ArrayXd> w0s;
  for (int r = 0; r < spec.restarts; ++r)
    w0s.push_back(detail::bench_w0(spec, 0, 0, r, inst->n()));

  for (std::size_t si = 0; si < spec.solvers.size(); ++si) {
    const SolverSpec& solver = spec.solvers[si];
    std::shared_ptr<const AnnealSchedule> sched;
    double param = 0.0;
    if (solver.kind == SolverSpec::Kind::dulqa) {
      sched = solver.resolve_schedule();
      detail::check_tau_match(solver.label, sched->tau(), spec.tau);
    } else {
      param = detail::tuned_param(
          solver, {inst}, spec, spec.tau,
          derive_seed(spec.master_seed, "bench_tune", static_cast<std::uint64_t>(si), 0),
          spec.threads);
      res.tuned[solver.label] = param;
    }

    const std::size_t steps = static_cast<std::size_t>(spec.tau) + 2;
    std::vector<std::vector<double>> e_w(steps), e_i(steps);
    for (auto& v : e_w) v.resize(static_cast<std::size_t>(spec.restarts));
    for (auto& v : e_i) v.resize(static_cast<std::size_t>(spec.restarts));
    std::vector<double> s_axis(steps, 0.0);

    parallel_for(static_cast<std::size_t>(spec.restarts), spec.threads, [&](std::size_t r) {
      TrajectoryRecord rec =
          detail::solve_once(solver, sched.get(), param, *inst, w0s[r], spec.tau,
                             spec.gamma, RolloutOptions{});
      for (std::size_t t = 0; t < steps; ++t) {
        e_w[t][r] = rec.e_w_per_spin[t];
        e_i[t][r] = rec.e_ising_per_spin[t];
        if (r == 0) s_axis[t] = rec.s[t];
      }
    });

    for (std::size_t t = 0; t < steps; ++t) {
      TrajectoryExpRow row;
      row.solver = solver.label;
      row.t = static_cast<int>(t);
      row.s = s_axis[t];
      std::tie(row.mean_e_w, row.sd_e_w) = detail::mean_sd(e_w[t]);
      std::tie(row.mean_e_ising, row.sd_e_ising) = detail::mean_sd(e_i[t]);
      res.rows.push_back(std::move(row));
    }
  }
  return res;
}

// --- crossover (Fig. 4 style) -----------------------------------------------

struct CrossoverRow {
  int tau = 0;
  std::string solver;
  double baseline_mean = 0.0;
  double delta_e = 0.0;  // baseline mean at tau - DULQA min at tau_ref
  double tuned = 0.0;
};

struct CrossoverResult {
  double dulqa_min_ref = 0.0;
  int tau_ref = 0;
  std::vector<CrossoverRow> rows;  // tau-major, roster order inside
  std::map<std::string, std::optional<int>> crossover_tau;

  std::string csv(const std::string& header = "") const {
    std::ostringstream out;
    out << header << "tau,solver,tuned_param,baseline_mean_e_ising,delta_e\n";
    for (const auto& r : rows)
      out << r.tau << "," << r.solver << "," << g17(r.tuned) << ","
          << g17(r.baseline_mean) << "," << g17(r.delta_e) << "\n";
    out << "# dulqa min at tau_ref=" << tau_ref << ": " << g17(dulqa_min_ref) << "\n";
    for (const auto& [label, t] : crossover_tau)
      out << "# crossover " << label << ": "
          << (t ? std::to_string(*t) : std::string("not reached")) << "\n";
    return out.str();
  }
};

// Baselines are re-tuned at every tau in the sweep; the DULQA reference is
// the min over restarts of the final energy at the checkpoint's own tau.
// Crossover for a baseline = smallest tau whose mean drops to the reference.
inline CrossoverResult crossover_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const int n = spec.sizes.at(0);
  const auto inst = detail::bench_instance(spec, 0, 0, n);

  std::size_t ref_idx = spec.solvers.size();
  for (std::size_t si = 0; si < spec.solvers.size(); ++si)
    if (spec.solvers[si].kind == SolverSpec::Kind::dulqa) {
      ref_idx = si;
      break;
    }
  if (ref_idx == spec.solvers.size())
    throw std::invalid_argument("crossover_experiment: roster has no dulqa reference");
  const auto ref_sched = spec.solvers[ref_idx].resolve_schedule();

  CrossoverResult res;
  res.tau_ref = ref_sched->tau();

  std::vector<Eigen::ArrayXd> w0s;
  for (int r = 0; r < spec.restarts; ++r)
    w0s.push_back(detail::bench_w0(spec, 0, 0, r, inst->n()));

  auto final_energies = [&](const SolverSpec& solver, const AnnealSchedule* sched,
                            double param, int tau) {
    std::vector<double> e(static_cast<std::size_t>(spec.restarts));
    parallel_for(e.size(), spec.threads, [&](std::size_t r) {
      RolloutOptions opts;
      opts.record_observables = false;
      TrajectoryRecord rec =
          detail::solve_once(solver, sched, param, *inst, w0s[r], tau, spec.gamma, opts);
      e[r] = ising_energy(*inst, sign_readout(rec.final_w)) / inst->n();
    });
    return e;
  };

  {
    const std::vector<double> e =
        final_energies(spec.solvers[ref_idx], ref_sched.get(), 0.0, res.tau_ref);
    res.dulqa_min_ref = e[0];
    for (double v : e) res.dulqa_min_ref = std::min(res.dulqa_min_ref, v);
  }

  for (std::size_t ti = 0; ti < spec.taus.size(); ++ti) {
    const int tau = spec.taus[ti];
    if (tau < 0) throw std::invalid_argument("crossover_experiment: negative tau");
    for (std::size_t si = 0; si < spec.solvers.size(); ++si) {
      if (si == ref_idx) continue;
      const SolverSpec& solver = spec.solvers[si];
      CrossoverRow row;
      row.tau = tau;
      row.solver = solver.label;
      std::shared_ptr<const AnnealSchedule> sched;
      if (solver.kind == SolverSpec::Kind::dulqa) {
        sched = solver.resolve_schedule();
        detail::check_tau_match(solver.label, sched->tau(), tau);
      } else {
        row.tuned = detail::tuned_param(
            solver, {inst}, spec, tau,
            derive_seed(spec.master_seed, "bench_tune", static_cast<std::uint64_t>(si),
                        static_cast<std::uint64_t>(ti)),
            spec.threads);
      }
      const std::vector<double> e = final_energies(solver, sched.get(), row.tuned, tau);
      row.baseline_mean = detail::mean_sd(e).first;
      row.delta_e = row.baseline_mean - res.dulqa_min_ref;
      auto& cross = res.crossover_tau[solver.label];
      if (row.delta_e <= 0.0 && (!cross || tau < *cross)) cross = tau;
      res.rows.push_back(std::move(row));
    }
  }
  return res;
}

// --- generalization (Fig. 5 style) ------------------------------------------

struct GeneralizationRow {
  int n = 0;
  std::string solver;
  int t = 0;
  double s = 0.0;
  double mean_e_ising = 0.0;  // mean over instances of per-instance restart means
  double sd_e_ising = 0.0;    // SD over instances
};

struct GeneralizationResult {
  std::vector<GeneralizationRow> rows;  // size-major, solver, then t

  std::string csv(const std::string& header = "") const {
    std::ostringstream out;
    out << header << "n,solver,t,s,mean_e_ising,sd_e_ising\n";
    for (const auto& r : rows)
      out << r.n << "," << r.solver << "," << r.t << "," << g17(r.s) << ","
          << g17(r.mean_e_ising) << "," << g17(r.sd_e_ising) << "\n";
    return out.str();
  }

  // final-step mean for one (n, solver)
  double final_mean(int n, const std::string& solver) const {
    const GeneralizationRow* best = nullptr;
    for (const auto& r : rows)
      if (r.n == n && r.solver == solver && (!best || r.t > best->t)) best = &r;
    if (!best) throw std::invalid_argument("final_mean: no such row");
    return best->mean_e_ising;
  }
};

// Fixed DULQA checkpoints applied unchanged to every fresh test instance;
// baselines re-tuned per instance. Statistics are over instances (per
// instance, energies are first averaged over restarts).
inline GeneralizationResult generalization_experiment(const ExperimentSpec& spec) {
  spec.validate();
  GeneralizationResult res;

  for (std::size_t ni = 0; ni < spec.sizes.size(); ++ni) {
    const int n = spec.sizes[ni];
    std::vector<std::shared_ptr<const IsingInstance>> insts;
    for (int i = 0; i < spec.instances; ++i)
      insts.push_back(detail::bench_instance(spec, static_cast<int>(ni), i, n));

    for (std::size_t si = 0; si < spec.solvers.size(); ++si) {
      const SolverSpec& solver = spec.solvers[si];
      std::shared_ptr<const AnnealSchedule> sched;
      if (solver.kind == SolverSpec::Kind::dulqa) {
        sched = solver.resolve_schedule();
        detail::check_tau_match(solver.label, sched->tau(), spec.tau);
      }

      const std::size_t steps = static_cast<std::size_t>(spec.tau) + 2;
      // per-instance restart-mean trajectories, filled in parallel
      std::vector<std::vector<double>> inst_mean(
          static_cast<std::size_t>(spec.instances), std::vector<double>(steps, 0.0));
      std::vector<double> s_axis(steps, 0.0);

      parallel_for(static_cast<std::size_t>(spec.instances), spec.threads,
                   [&](std::size_t i) {
        const IsingInstance& inst = *insts[i];
        double param = 0.0;
        if (solver.kind != SolverSpec::Kind::dulqa)
          param = detail::tuned_param(
              solver, {insts[i]}, spec, spec.tau,
              derive_seed(spec.master_seed, "bench_tune", static_cast<std::uint64_t>(si),
                          static_cast<std::uint64_t>(ni), static_cast<std::uint64_t>(i)),
              1);
        for (int r = 0; r < spec.restarts; ++r) {
          const Eigen::ArrayXd w0 =
              detail::bench_w0(spec, static_cast<int>(ni), static_cast<int>(i), r, n);
          TrajectoryRecord rec = detail::solve_once(solver, sched.get(), param, inst, w0,
                                                    spec.tau, spec.gamma,
                                                    RolloutOptions{});
          for (std::size_t t = 0; t < steps; ++t)
            inst_mean[i][t] += rec.e_ising_per_spin[t];
          if (i == 0 && r == 0)
            for (std::size_t t = 0; t < steps; ++t) s_axis[t] = rec.s[t];
        }
        for (std::size_t t = 0; t < steps; ++t)
          inst_mean[i][t] /= static_cast<double>(spec.restarts);
      });

      for (std::size_t t = 0; t < steps; ++t) {
        std::vector<double> xs(static_cast<std::size_t>(spec.instances));
        for (int i = 0; i < spec.instances; ++i)
          xs[static_cast<std::size_t>(i)] = inst_mean[static_cast<std::size_t>(i)][t];
        GeneralizationRow row;
        row.n = n;
        row.solver = solver.label;
        row.t = static_cast<int>(t);
        row.s = s_axis[t];
        std::tie(row.mean_e_ising, row.sd_e_ising) = detail::mean_sd(xs);
        res.rows.push_back(std::move(row));
      }
    }
  }
  return res;
}

// --- scaling (Fig. 6 style) -------------------------------------------------

struct FitRange {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
};

struct PowerLawFit {
  double exponent = 0.0;   // positive decay rate: y ~ prefactor * n^(-exponent)
  double prefactor = 0.0;
  double r2 = 0.0;
  double lo = 0.0, hi = 0.0;
  int n_points = 0;
};

// OLS on (log n, log y). Throws std::domain_error for y <= 0 in range and
// std::invalid_argument for fewer than two usable points.
inline PowerLawFit power_law_fit(const std::vector<std::pair<double, double>>& points,
                                 FitRange range = {}) {
  std::vector<double> lx, ly;
  for (const auto& [x, y] : points) {
    if (x < range.lo || x > range.hi) continue;
    if (!(y > 0.0))
      throw std::domain_error("power_law_fit: y <= 0 at n = " + g17(x));
    lx.push_back(std::log(x));
    ly.push_back(std::log(y));
  }
  if (lx.size() < 2)
    throw std::invalid_argument("power_law_fit: need at least 2 points in range");

  const double k = static_cast<double>(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= k;
  my /= k;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("power_law_fit: all n equal");
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double r = ly[i] - (intercept + slope * lx[i]);
    ss_res += r * r;
  }
  PowerLawFit fit;
  fit.exponent = -slope;
  fit.prefactor = std::exp(intercept);
  fit.r2 = syy == 0.0 ? 1.0 : 1.0 - ss_res / syy;
  fit.lo = range.lo;
  fit.hi = range.hi;
  fit.n_points = static_cast<int>(lx.size());
  return fit;
}

struct ScalingRow {
  int n = 0;
  double mean_e = 0.0;   // mean over instances of min-over-restarts E_ising/N
  double sd_e = 0.0;     // population SD over instances of the same statistic
  double residual = 0.0; // mean_e - E_GS (per-instance exact GS when exact_gs)
};

struct ScalingResult {
  std::vector<ScalingRow> rows;
  std::optional<PowerLawFit> fit_residual;
  std::optional<PowerLawFit> fit_sd;

  std::string csv(const std::string& header = "") const {
    std::ostringstream out;
    out << header << "n,mean_min_e_ising,sd_e_ising,residual\n";
    for (const auto& r : rows)
      out << r.n << "," << g17(r.mean_e) << "," << g17(r.sd_e) << ","
          << g17(r.residual) << "\n";
    auto fit_line = [&](const char* name, const PowerLawFit& f) {
      out << "# fit " << name << ": exponent=" << g17(f.exponent)
          << " prefactor=" << g17(f.prefactor) << " r2=" << g17(f.r2)
          << " points=" << f.n_points << "\n";
    };
    if (fit_residual) fit_line("residual", *fit_residual);
    if (fit_sd) fit_line("sd", *fit_sd);
    return out.str();
  }
};

// One DULQA checkpoint per size (or one shared checkpoint for the whole
// sweep). Per instance the min over restarts of the final energy density is
// taken; mean and SD aggregate over instances. Residuals are measured against
// the thermodynamic E_GS constant, or per-instance brute-force ground states
// when exact_gs is set.
inline ScalingResult scaling_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const bool shared = spec.solvers.size() == 1;
  if (!shared && spec.solvers.size() != spec.sizes.size())
    throw std::invalid_argument(
        "scaling_experiment: need one solver per size or a single shared solver");
  for (const auto& s : spec.solvers)
    if (s.kind != SolverSpec::Kind::dulqa)
      throw std::invalid_argument("scaling_experiment: solvers must be dulqa checkpoints");

  ScalingResult res;
  for (std::size_t ni = 0; ni < spec.sizes.size(); ++ni) {
    const int n = spec.sizes[ni];
    const SolverSpec& solver = spec.solvers[shared ? 0 : ni];
    const auto sched = solver.resolve_schedule();
    detail::check_tau_match(solver.label, sched->tau(), spec.tau);

    std::vector<double> min_e(static_cast<std::size_t>(spec.instances), 0.0);
    std::vector<double> gs(static_cast<std::size_t>(spec.instances),
                           kSkGroundStateEnergy);
    parallel_for(static_cast<std::size_t>(spec.instances), spec.threads,
                 [&](std::size_t i) {
      const auto inst = detail::bench_instance(spec, static_cast<int>(ni),
                                               static_cast<int>(i), n);
      double best = std::numeric_limits<double>::infinity();
      RolloutOptions opts;
      opts.record_observables = false;
      for (int r = 0; r < spec.restarts; ++r) {
        const Eigen::ArrayXd w0 =
            detail::bench_w0(spec, static_cast<int>(ni), static_cast<int>(i), r, n);
        TrajectoryRecord rec = lqa_run(*inst, w0, *sched, opts);
        best = std::min(best,
                        ising_energy(*inst, sign_readout(rec.final_w)) / inst->n());
      }
      min_e[i] = best;
      if (spec.exact_gs) gs[i] = brute_force_ground_state(*inst).energy / inst->n();
    });

    ScalingRow row;
    row.n = n;
    std::tie(row.mean_e, row.sd_e) = detail::mean_sd(min_e);
    double resid = 0.0;
    for (std::size_t i = 0; i < min_e.size(); ++i) resid += min_e[i] - gs[i];
    row.residual = resid / static_cast<double>(min_e.size());
    res.rows.push_back(row);
  }

  std::vector<std::pair<double, double>> resid_pts, sd_pts;
  for (const auto& r : res.rows) {
    resid_pts.emplace_back(r.n, r.residual);
    sd_pts.emplace_back(r.n, r.sd_e);
  }
  if (res.rows.size() >= 2) {
    try {
      res.fit_residual = power_law_fit(resid_pts);
    } catch (const std::domain_error&) {
      // non-positive residual: leave the fit empty, rows still report it
    }
    try {
      res.fit_sd = power_law_fit(sd_pts);
    } catch (const std::domain_error&) {
    }
  }
  return res;
}

// --- manifest ----------------------------------------------------------------

inline const char* experiment_kind_name(ExperimentSpec::Kind k) {
  switch (k) {
    case ExperimentSpec::Kind::trajectory: return "trajectory";
    case ExperimentSpec::Kind::crossover: return "crossover";
    case ExperimentSpec::Kind::generalization: return "generalization";
    case ExperimentSpec::Kind::scaling: return "scaling";
  }
  return "?";
}

// Replayable description of a bench run: spec fields, seeds, checkpoint
// hashes, and (for scaling) the published reference exponents. No timestamps,
// so identical runs write identical manifests.
inline std::string bench_manifest(const ExperimentSpec& spec,
                                  const std::vector<std::pair<std::string, std::string>>&
                                      extra = {}) {
  std::ostringstream out;
  out << "# dulqa bench manifest version=" << kVersion << "\n";
  out << "kind=" << experiment_kind_name(spec.kind) << "\n";
  out << "master_seed=" << spec.master_seed << "\n";
  out << "sizes=";
  for (std::size_t i = 0; i < spec.sizes.size(); ++i)
    out << (i ? "," : "") << spec.sizes[i];
  out << "\n";
  out << "tau=" << spec.tau << "\n";
  if (!spec.taus.empty()) {
    out << "taus=";
    for (std::size_t i = 0; i < spec.taus.size(); ++i)
      out << (i ? "," : "") << spec.taus[i];
    out << "\n";
  }
  out << "restarts=" << spec.restarts << "\n";
  out << "instances=" << spec.instances << "\n";
  out << "tune_budget=" << spec.tune_budget << "\n";
  out << "tune_restarts=" << spec.tune_restarts << "\n";
  out << "f=" << g17(spec.f) << "\n";
  out << "gamma=" << g17(spec.gamma) << "\n";
  if (!spec.instance_path.empty())
    out << "instance=" << spec.instance_path << " fnv64="
        << hex64(fnv1a64_file(spec.instance_path)) << "\n";
  out << "exact_gs=" << (spec.exact_gs ? 1 : 0) << "\n";
  for (std::size_t i = 0; i < spec.solvers.size(); ++i) {
    const SolverSpec& s = spec.solvers[i];
    out << "solver" << i << "=" << s.label << " kind=" << solver_kind_name(s.kind);
    if (s.kind == SolverSpec::Kind::dulqa) {
      const std::string text = s.schedule ? format_checkpoint(*s.schedule)
                                          : read_file(s.checkpoint);
      out << " checkpoint=" << (s.checkpoint.empty() ? "<inline>" : s.checkpoint)
          << " fnv64=" << hex64(fnv1a64_bytes(text));
    } else if (s.param > 0.0) {
      out << " param=" << g17(s.param);
    }
    out << "\n";
  }
  if (spec.kind == ExperimentSpec::Kind::scaling) {
    out << "e_gs=" << g17(kSkGroundStateEnergy) << "\n";
    out << "reference_omega=" << g17(kRefOmegaResidual) << "\n";
    out << "reference_omega_s=" << g17(kRefOmegaSd) << "\n";
  }
  for (const auto& [k, v] : extra) out << k << "=" << v << "\n";
  return out.str();
}

}  // namespace dulqa
