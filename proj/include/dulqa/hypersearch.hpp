#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dulqa/errors.hpp"
#include "dulqa/io.hpp"
#include "dulqa/ising.hpp"
#include "dulqa/lqa.hpp"
#include "dulqa/parallel.hpp"
#include "dulqa/rng.hpp"

namespace dulqa {

struct ParamSpec {
  std::string name;
  double lo = 0.0, hi = 0.0;
  bool log_scale = false;

  void validate() const {
    if (name.empty()) throw std::invalid_argument("ParamSpec: empty name");
    if (!(lo < hi)) throw std::invalid_argument("ParamSpec " + name + ": need lo < hi");
    if (log_scale && !(lo > 0.0))
      throw std::invalid_argument("ParamSpec " + name + ": log scale needs lo > 0");
  }
};

struct SearchSpace {
  std::vector<ParamSpec> params;

  void validate() const {
    if (params.empty()) throw std::invalid_argument("SearchSpace: no parameters");
    for (const auto& p : params) p.validate();
  }
};

// std::map keeps parameter order name-sorted, so logs and hashing are stable.
using ParamMap = std::map<std::string, double>;

struct Trial {
  int index = 0;
  ParamMap params;
  double objective = 0.0;  // +inf when the evaluation failed or was non-finite
};

struct SearchResult {
  std::vector<Trial> trials;  // in trial-index order
  int best_index = -1;

  const Trial& best() const {
    if (best_index < 0) throw std::logic_error("SearchResult: no finite trial");
    return trials[static_cast<std::size_t>(best_index)];
  }
};

using Objective = std::function<double(const ParamMap&)>;

// Random search: trial r draws each parameter from its own range using the
// stream (seed, "hypersearch", r), evaluates the objective, and the minimum
// over finite trials wins (first such index on ties). Failed or non-finite
// evaluations score +inf. Trials are independent, so they parallelize; the
// argmin scan stays in index order regardless of thread count.
inline SearchResult random_search(const SearchSpace& space, const Objective& objective,
                                  int budget, std::uint64_t seed, int threads = 1) {
  space.validate();
  if (budget < 1) throw std::invalid_argument("random_search: budget must be >= 1");

  SearchResult res;
  res.trials.resize(static_cast<std::size_t>(budget));
  parallel_for(static_cast<std::size_t>(budget), threads, [&](std::size_t r) {
    Trial& trial = res.trials[r];
    trial.index = static_cast<int>(r);
    RngStream rng(seed, "hypersearch", static_cast<std::uint64_t>(r));
    for (const auto& p : space.params)
      trial.params[p.name] =
          p.log_scale ? rng.log_uniform(p.lo, p.hi) : rng.uniform(p.lo, p.hi);
    double value = std::numeric_limits<double>::infinity();
    try {
      value = objective(trial.params);
    } catch (const divergence_error&) {
      // a hyperparameter that blows up the rollout simply loses
    }
    trial.objective = std::isfinite(value)
                          ? value
                          : std::numeric_limits<double>::infinity();
  });
  for (std::size_t r = 0; r < res.trials.size(); ++r) {
    if (!std::isfinite(res.trials[r].objective)) continue;
    if (res.best_index < 0 ||
        res.trials[r].objective <
            res.trials[static_cast<std::size_t>(res.best_index)].objective)
      res.best_index = static_cast<int>(r);
  }
  return res;
}

// --- baseline-solver tuning -------------------------------------------------

struct TuneProblem {
  std::vector<std::shared_ptr<const IsingInstance>> instances;
  std::vector<std::vector<Eigen::ArrayXd>> w0;  // [instance][restart]
  int tau = 20;
  double gamma = 1.0;

  // Starting points come from (seed, "tune_w0", instance, restart), so every
  // candidate hyperparameter sees the same initial conditions.
  static TuneProblem make(std::vector<std::shared_ptr<const IsingInstance>> insts,
                          int restarts, double f, int tau, std::uint64_t seed) {
    if (insts.empty()) throw std::invalid_argument("TuneProblem: no instances");
    if (restarts < 1) throw std::invalid_argument("TuneProblem: restarts must be >= 1");
    TuneProblem p;
    p.instances = std::move(insts);
    p.tau = tau;
    p.w0.resize(p.instances.size());
    for (std::size_t i = 0; i < p.instances.size(); ++i) {
      const int n = p.instances[i]->n();
      for (int r = 0; r < restarts; ++r) {
        RngStream rng(seed, "tune_w0", static_cast<std::uint64_t>(i),
                      static_cast<std::uint64_t>(r));
        Eigen::ArrayXd w(n);
        for (int k = 0; k < n; ++k) w[k] = (2.0 * rng.uniform01() - 1.0) * f;
        p.w0[i].push_back(std::move(w));
      }
    }
    return p;
  }
};

// Mean over all (instance, restart) pairs of the final Ising energy per spin
// after a constant-(eta, gamma) rollout. The readout is the sign projection.
inline double gd_objective(const TuneProblem& prob, double eta) {
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < prob.instances.size(); ++i) {
    const IsingInstance& inst = *prob.instances[i];
    const AnnealSchedule sched = AnnealSchedule::constant(prob.tau, eta, prob.gamma);
    for (const Eigen::ArrayXd& w0 : prob.w0[i]) {
      TrajectoryRecord rec = lqa_run(inst, w0, sched);
      const SpinConfig sigma = sign_readout(rec.final_w);
      acc += ising_energy(inst, sigma) / inst.n();
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

inline double adam_objective(const TuneProblem& prob, double step_size) {
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < prob.instances.size(); ++i) {
    const IsingInstance& inst = *prob.instances[i];
    for (const Eigen::ArrayXd& w0 : prob.w0[i]) {
      TrajectoryRecord rec =
          lqa_adam_run(inst, w0, prob.tau, step_size, prob.gamma);
      const SpinConfig sigma = sign_readout(rec.final_w);
      acc += ising_energy(inst, sigma) / inst.n();
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

// eta ~ log-uniform [1e-3, 10]
inline SearchResult tune_lqa_gd(const TuneProblem& prob, int budget,
                                std::uint64_t seed, int threads = 1) {
  SearchSpace space{{{"eta", 1e-3, 10.0, true}}};
  return random_search(
      space, [&](const ParamMap& p) { return gd_objective(prob, p.at("eta")); },
      budget, seed, threads);
}

// Adam step size ~ log-uniform [1e-4, 1]
inline SearchResult tune_lqa_adam(const TuneProblem& prob, int budget,
                                  std::uint64_t seed, int threads = 1) {
  SearchSpace space{{{"step_size", 1e-4, 1.0, true}}};
  return random_search(
      space,
      [&](const ParamMap& p) { return adam_objective(prob, p.at("step_size")); },
      budget, seed, threads);
}

// trial,<name>=<value>,...,objective  (one line per trial, index order)
inline std::string format_trial_log(const SearchResult& res,
                                    const std::string& header = "") {
  std::ostringstream out;
  out << header;
  for (const auto& t : res.trials) {
    out << t.index;
    for (const auto& [name, value] : t.params) out << "," << name << "=" << g17(value);
    out << "," << g17(t.objective) << "\n";
  }
  if (res.best_index >= 0) {
    out << "# best trial=" << res.best_index;
    for (const auto& [name, value] : res.best().params)
      out << " " << name << "=" << g17(value);
    out << "\n";
  }
  return out.str();
}

}  // namespace dulqa
