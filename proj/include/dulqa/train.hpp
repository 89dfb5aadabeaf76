#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dulqa/errors.hpp"
#include "dulqa/io.hpp"
#include "dulqa/ising.hpp"
#include "dulqa/lqa.hpp"
#include "dulqa/parallel.hpp"
#include "dulqa/rng.hpp"

namespace dulqa {

// Trainable schedule: the 2(tau+1) parameters plus their outer-Adam state.
struct TrainableSchedule {
  Eigen::ArrayXd eta, gamma;
  Eigen::ArrayXd m_eta, v_eta, m_gamma, v_gamma;
  long step = 0;

  int tau() const { return static_cast<int>(eta.size()) - 1; }

  static TrainableSchedule constant(int tau, double eta0, double gamma0) {
    if (tau < 0) throw std::invalid_argument("TrainableSchedule: tau must be >= 0");
    TrainableSchedule t;
    t.eta = Eigen::ArrayXd::Constant(tau + 1, eta0);
    t.gamma = Eigen::ArrayXd::Constant(tau + 1, gamma0);
    t.reset_moments();
    return t;
  }

  void reset_moments() {
    m_eta = Eigen::ArrayXd::Zero(eta.size());
    v_eta = Eigen::ArrayXd::Zero(eta.size());
    m_gamma = Eigen::ArrayXd::Zero(eta.size());
    v_gamma = Eigen::ArrayXd::Zero(eta.size());
    step = 0;
  }

  AnnealSchedule schedule() const {
    AnnealSchedule s;
    s.eta = eta;
    s.gamma = gamma;
    return s;
  }

  // Prefix schedule for incremental stage t: entries 0..t, so a rollout of
  // depth t anneals with s(t') = t'/t.
  AnnealSchedule stage_schedule(int t) const {
    if (t < 0 || t > tau())
      throw std::invalid_argument("stage_schedule: depth out of range");
    AnnealSchedule s;
    s.eta = eta.head(t + 1);
    s.gamma = gamma.head(t + 1);
    return s;
  }
};

struct TrainConfig {
  int n = 0;
  int tau = 0;
  int n_epoch = 0;
  int batch_size = 0;  // |D|
  double eta0 = 0.1;
  double gamma0 = 1.0;
  double f = 0.5;        // init scale of w(0)
  double outer_lr = 1e-3;
  enum class Strategy { one_instance, ensemble } strategy = Strategy::one_instance;
  std::uint64_t master_seed = 0;
  bool reset_moments = true;
  int threads = 1;

  void validate() const {
    if (n < 2) throw std::invalid_argument("TrainConfig: n must be >= 2");
    if (tau < 1) throw std::invalid_argument("TrainConfig: tau must be >= 1");
    if (n_epoch < 1) throw std::invalid_argument("TrainConfig: n_epoch must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(f > 0.0)) throw std::invalid_argument("TrainConfig: f must be > 0");
    if (!(outer_lr >= 0.0)) throw std::invalid_argument("TrainConfig: outer_lr must be >= 0");
    if (!(eta0 > 0.0) || !(gamma0 > 0.0))
      throw std::invalid_argument("TrainConfig: eta0 and gamma0 must be > 0");
    if (threads < 1) throw std::invalid_argument("TrainConfig: threads must be >= 1");
  }
};

struct BatchItem {
  std::shared_ptr<const IsingInstance> inst;
  Eigen::ArrayXd w0;
};

struct Batch {
  std::vector<BatchItem> items;
  std::size_t size() const { return items.size(); }
};

// w_i(0) = (2 u_i - 1) f with u_i ~ Unif[0,1), i.e. uniform on [-f, f).
inline Eigen::ArrayXd init_w0(int n, double f, RngStream& rng) {
  if (!(f > 0.0)) throw std::invalid_argument("init_w0: f must be > 0");
  Eigen::ArrayXd w(n);
  for (int i = 0; i < n; ++i) w[i] = (2.0 * rng.uniform01() - 1.0) * f;
  return w;
}

// Batch for one epoch. one_instance: the single fixed problem (derived from
// the master seed alone) with |D| fresh starting points per epoch. ensemble:
// |D| fresh problems, one per item. All sub-streams are keyed by
// (master_seed, purpose, epoch, item).
inline Batch make_batch(TrainConfig::Strategy strategy, const TrainConfig& cfg,
                        long epoch_index) {
  cfg.validate();
  Batch batch;
  batch.items.reserve(cfg.batch_size);
  std::shared_ptr<const IsingInstance> shared;
  if (strategy == TrainConfig::Strategy::one_instance)
    shared = std::make_shared<const IsingInstance>(
        generate_sk(cfg.n, derive_seed(cfg.master_seed, "train_inst", 0, 0)));
  for (int d = 0; d < cfg.batch_size; ++d) {
    BatchItem item;
    if (strategy == TrainConfig::Strategy::one_instance) {
      item.inst = shared;
    } else {
      item.inst = std::make_shared<const IsingInstance>(generate_sk(
          cfg.n, derive_seed(cfg.master_seed, "train_inst",
                             static_cast<std::uint64_t>(epoch_index),
                             static_cast<std::uint64_t>(d))));
    }
    RngStream rng(cfg.master_seed, "train_w0",
                  static_cast<std::uint64_t>(epoch_index),
                  static_cast<std::uint64_t>(d));
    item.w0 = init_w0(cfg.n, cfg.f, rng);
    batch.items.push_back(std::move(item));
  }
  return batch;
}

// Parameter gradients for one incremental stage; index t' = 0..depth.
struct ScheduleGrads {
  Eigen::ArrayXd d_eta, d_gamma;

  static ScheduleGrads zero(int depth) {
    ScheduleGrads g;
    g.d_eta = Eigen::ArrayXd::Zero(depth + 1);
    g.d_gamma = Eigen::ArrayXd::Zero(depth + 1);
    return g;
  }
};

// Forward rollout tapes, one per batch item, holding w(0..depth+1).
struct RolloutTape {
  std::vector<Eigen::ArrayXd> w;
  bool diverged = false;
  int diverged_step = -1;
};

struct BatchEval {
  double loss = 0.0;            // mean final cost over kept items
  ScheduleGrads grads;          // mean over kept items
  std::vector<RolloutTape> tapes;
  std::vector<std::size_t> diverged_items;
  std::size_t kept = 0;
};

namespace detail {

// Adjoint sweep for one item. Forward stored w(0..t+1); the reverse recursion
//   lambda(t'+1 -> t'):  lambda(t') = lambda(t'+1) - eta(t') H(t') lambda(t'+1)
// needs only Hessian-vector products, never the Hessian itself. Gradients:
//   dL/deta(t')   = -lambda(t'+1)^T grad C(w(t'), s(t'), gamma(t'))
//   dL/dgamma(t') = -eta(t') lambda(t'+1)^T d/dgamma grad C(w(t'), ...)
// plus the direct path dL/dgamma(t) += dC/dgamma(w(t+1), 1, gamma(t)).
inline void adjoint_item(const IsingInstance& inst, const RolloutTape& tape,
                         const AnnealSchedule& sched, double* loss_out,
                         ScheduleGrads* grads_out) {
  const int t = sched.tau();
  RelaxedState st(tape.w[static_cast<std::size_t>(t) + 1]);
  *loss_out = cost(st, inst, 1.0, sched.gamma[t]);
  if (!grads_out) return;

  *grads_out = ScheduleGrads::zero(t);
  grads_out->d_gamma[t] += cost_dgamma(st, inst, 1.0, sched.gamma[t]);
  Eigen::ArrayXd lambda = cost_gradient(st, inst, 1.0, sched.gamma[t]);
  for (int tp = t; tp >= 0; --tp) {
    const double s = s_of(tp, t);
    st.assign(tape.w[static_cast<std::size_t>(tp)]);
    // One J*z per step: the eta-gradient, the gamma-gradient and the HVP all
    // see the same local field 2 Jz + h, so share it instead of recomputing.
    // Expressions mirror cost_gradient/cost_grad_dgamma/cost_hvp exactly.
    const double g = sched.gamma[tp];
    const Eigen::ArrayXd a = st.dphi();
    const Eigen::ArrayXd xa = st.x * a;
    const Eigen::ArrayXd jz = matvec(inst.couplings, st.z);
    const Eigen::ArrayXd lf = 2.0 * jz + inst.fields;
    const Eigen::ArrayXd grad = (s * g * lf * st.x + (1.0 - s) * st.z) * a;
    grads_out->d_eta[tp] += -dot(lambda, grad);
    grads_out->d_gamma[tp] +=
        -sched.eta[tp] * dot(lambda, s * lf * st.x * a);
    if (tp > 0) {
      const Eigen::ArrayXd jxal = matvec(inst.couplings, xa * lambda);
      const Eigen::ArrayXd d2z = -st.z * a.square() - 2.0 * st.tanh_w * xa;
      const Eigen::ArrayXd d2x = -st.x * a.square() + 2.0 * st.tanh_w * st.z * a;
      const Eigen::ArrayXd diag = s * g * lf * d2z - (1.0 - s) * d2x;
      const Eigen::ArrayXd hv = 2.0 * s * g * xa * jxal + diag * lambda;
      lambda -= sched.eta[tp] * hv;
    }
  }
}

}  // namespace detail

// Rolls every batch item to `depth` with the stage schedule (s(t') = t'/depth),
// keeping snapshots, and runs the adjoint sweep when want_grads is set.
// Diverged items are recorded and excluded from the fixed-order means.
inline BatchEval batch_loss_and_grads(const Batch& batch,
                                      const TrainableSchedule& params, int depth,
                                      bool want_grads, int threads = 1) {
  if (batch.size() == 0) throw std::invalid_argument("empty batch");
  const AnnealSchedule sched = params.stage_schedule(depth);
  const std::size_t count = batch.size();

  BatchEval out;
  out.tapes.resize(count);
  std::vector<double> losses(count, 0.0);
  std::vector<ScheduleGrads> grads(count);

  parallel_for(count, threads, [&](std::size_t d) {
    const BatchItem& item = batch.items[d];
    RolloutTape& tape = out.tapes[d];
    try {
      RolloutOptions opts;
      opts.record_snapshots = true;
      opts.record_observables = false;
      TrajectoryRecord rec = lqa_run(*item.inst, item.w0, sched, opts);
      tape.w = std::move(rec.snapshots);
      tape.w.push_back(std::move(rec.final_w));
      detail::adjoint_item(*item.inst, tape, sched, &losses[d],
                           want_grads ? &grads[d] : nullptr);
    } catch (const divergence_error& e) {
      tape.diverged = true;
      tape.diverged_step = e.step();
    }
  });

  // serial reduction in ascending item order
  out.grads = ScheduleGrads::zero(depth);
  double loss_acc = 0.0;
  for (std::size_t d = 0; d < count; ++d) {
    if (out.tapes[d].diverged) {
      out.diverged_items.push_back(d);
      continue;
    }
    loss_acc += losses[d];
    if (want_grads) {
      out.grads.d_eta += grads[d].d_eta;
      out.grads.d_gamma += grads[d].d_gamma;
    }
    ++out.kept;
  }
  if (out.kept > 0) {
    const double inv = 1.0 / static_cast<double>(out.kept);
    out.loss = loss_acc * inv;
    out.grads.d_eta *= inv;
    out.grads.d_gamma *= inv;
  }
  return out;
}

// Mean final cost over the batch at unroll depth `depth` (Eq.-style loss).
// Throws on any diverged item, naming the first offending index.
inline double loss(const Batch& batch, const TrainableSchedule& params,
                   int depth, int threads = 1) {
  BatchEval ev = batch_loss_and_grads(batch, params, depth, false, threads);
  if (!ev.diverged_items.empty())
    throw divergence_error(-1, "loss: batch item " +
                                   std::to_string(ev.diverged_items.front()) +
                                   " diverged");
  return ev.loss;
}

// Adjoint gradients of the batch loss for every eta(t'), gamma(t') at depth t.
inline ScheduleGrads backward(const Batch& batch, const TrainableSchedule& params,
                              int depth, int threads = 1) {
  BatchEval ev = batch_loss_and_grads(batch, params, depth, true, threads);
  if (!ev.diverged_items.empty())
    throw divergence_error(-1, "backward: batch item " +
                                   std::to_string(ev.diverged_items.front()) +
                                   " diverged");
  return ev.grads;
}

// One Adam update on the active parameters eta(0..depth), gamma(0..depth).
// Parameters are clamped to stay >= 1e-8; a rollout with a non-positive step
// size or coupling is meaningless and the clamp keeps AnnealSchedule valid.
inline void outer_adam_step(TrainableSchedule& params, const ScheduleGrads& grads,
                            double lr, int depth) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, floor = 1e-8;
  if (depth < 0 || depth > params.tau())
    throw std::invalid_argument("outer_adam_step: depth out of range");
  if (!grads.d_eta.isFinite().all() || !grads.d_gamma.isFinite().all())
    throw std::invalid_argument("outer_adam_step: non-finite gradients");
  params.step += 1;
  const double mc = 1.0 - std::pow(beta1, static_cast<double>(params.step));
  const double vc = 1.0 - std::pow(beta2, static_cast<double>(params.step));
  for (int t = 0; t <= depth; ++t) {
    auto update = [&](double& p, double g, double& m, double& v) {
      m = beta1 * m + (1.0 - beta1) * g;
      v = beta2 * v + (1.0 - beta2) * g * g;
      p -= lr * (m / mc) / (std::sqrt(v / vc) + eps);
      if (p < floor) p = floor;
    };
    update(params.eta[t], grads.d_eta[t], params.m_eta[t], params.v_eta[t]);
    update(params.gamma[t], grads.d_gamma[t], params.m_gamma[t], params.v_gamma[t]);
  }
}

struct LossLogEntry {
  int stage;
  int epoch;
  double loss;
};

struct TrainResult {
  TrainableSchedule params;
  std::vector<LossLogEntry> loss_log;
  long diverged_items = 0;
};

// Called after each completed stage (checkpointing / progress).
using StageCallback = std::function<void(int stage, const TrainableSchedule&)>;

// Incremental training: stage t trains the depth-t unroll, warm-started from
// the previous stage's parameters. Epoch batches continue a global epoch
// counter across stages so ensemble data never repeats. Diverged batch items
// are dropped from that epoch's means; a stage aborts only when an entire
// batch diverges.
inline TrainResult incremental_train(const TrainConfig& cfg,
                                     const StageCallback& on_stage = {},
                                     const TrainableSchedule* resume = nullptr,
                                     int completed_stages = 0, int last_stage = -1) {
  cfg.validate();
  if (completed_stages < 0 || completed_stages > cfg.tau)
    throw std::invalid_argument("incremental_train: bad completed_stages");
  if (last_stage < 0) last_stage = cfg.tau;
  if (last_stage > cfg.tau)
    throw std::invalid_argument("incremental_train: last_stage exceeds tau");

  TrainResult res;
  res.params = resume ? *resume
                      : TrainableSchedule::constant(cfg.tau, cfg.eta0, cfg.gamma0);
  if (res.params.tau() != cfg.tau)
    throw std::invalid_argument("incremental_train: resume state tau mismatch");

  long global_epoch =
      static_cast<long>(completed_stages) * static_cast<long>(cfg.n_epoch);
  for (int stage = completed_stages + 1; stage <= last_stage; ++stage) {
    if (cfg.reset_moments) res.params.reset_moments();
    for (int epoch = 1; epoch <= cfg.n_epoch; ++epoch) {
      ++global_epoch;
      const Batch batch = make_batch(cfg.strategy, cfg, global_epoch);
      BatchEval ev =
          batch_loss_and_grads(batch, res.params, stage, true, cfg.threads);
      res.diverged_items += static_cast<long>(ev.diverged_items.size());
      if (ev.kept == 0)
        throw divergence_error(-1, "incremental_train: every batch item diverged "
                                   "at stage " + std::to_string(stage) +
                                   " epoch " + std::to_string(epoch));
      res.loss_log.push_back({stage, epoch, ev.loss});
      outer_adam_step(res.params, ev.grads, cfg.outer_lr, stage);
    }
    if (on_stage) on_stage(stage, res.params);
  }
  return res;
}

// --- checkpoint and log formats --------------------------------------------
// Checkpoint: '#' comments, a `tau=<int>` header, then `t,eta,gamma` lines.

inline std::string format_checkpoint(const AnnealSchedule& sched,
                                     const std::string& header = "") {
  std::ostringstream out;
  out << header;
  out << "tau=" << sched.tau() << "\n";
  for (int t = 0; t <= sched.tau(); ++t)
    out << t << "," << g17(sched.eta[t]) << "," << g17(sched.gamma[t]) << "\n";
  return out.str();
}

inline void write_checkpoint(const std::string& path, const AnnealSchedule& sched,
                             const std::string& header = "") {
  write_file(path, format_checkpoint(sched, header));
}

inline AnnealSchedule parse_checkpoint(std::istream& in, const std::string& origin) {
  std::string line;
  int lineno = 0;
  int tau = -1;
  std::vector<double> eta, gamma;
  auto fail = [&](const std::string& msg) {
    throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("tau=", 0) == 0) {
      tau = std::stoi(line.substr(4));
      if (tau < 0) fail("bad tau");
      continue;
    }
    int t;
    double e, g;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf", &t, &e, &g) != 3)
      fail("expected t,eta,gamma");
    if (t != static_cast<int>(eta.size())) fail("t values must be consecutive from 0");
    eta.push_back(e);
    gamma.push_back(g);
  }
  if (tau < 0) throw std::invalid_argument(origin + ": missing tau= header");
  if (static_cast<int>(eta.size()) != tau + 1)
    throw std::invalid_argument(origin + ": expected " + std::to_string(tau + 1) +
                                " parameter lines, got " + std::to_string(eta.size()));
  AnnealSchedule s;
  s.eta = Eigen::Map<Eigen::ArrayXd>(eta.data(), tau + 1);
  s.gamma = Eigen::Map<Eigen::ArrayXd>(gamma.data(), tau + 1);
  s.validate();
  return s;
}

inline AnnealSchedule read_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open checkpoint: " + path);
  return parse_checkpoint(in, path);
}

inline std::string format_loss_log(const std::vector<LossLogEntry>& log,
                                   const std::string& header = "") {
  std::ostringstream out;
  out << header << "stage,epoch,loss\n";
  for (const auto& e : log)
    out << e.stage << "," << e.epoch << "," << g17(e.loss) << "\n";
  return out.str();
}

// Resume state: checkpoint plus Adam moments and the completed stage count.
inline std::string format_train_state(const TrainableSchedule& p,
                                      int completed_stages) {
  std::ostringstream out;
  out << "tau=" << p.tau() << "\n";
  out << "completed_stages=" << completed_stages << "\n";
  out << "adam_step=" << p.step << "\n";
  for (int t = 0; t <= p.tau(); ++t)
    out << t << "," << g17(p.eta[t]) << "," << g17(p.gamma[t]) << ","
        << g17(p.m_eta[t]) << "," << g17(p.v_eta[t]) << "," << g17(p.m_gamma[t])
        << "," << g17(p.v_gamma[t]) << "\n";
  return out.str();
}

inline std::pair<TrainableSchedule, int> parse_train_state(std::istream& in,
                                                           const std::string& origin) {
  std::string line;
  int tau = -1, completed = -1;
  long step = 0;
  std::vector<std::array<double, 6>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("tau=", 0) == 0) {
      tau = std::stoi(line.substr(4));
    } else if (line.rfind("completed_stages=", 0) == 0) {
      completed = std::stoi(line.substr(17));
    } else if (line.rfind("adam_step=", 0) == 0) {
      step = std::stol(line.substr(10));
    } else {
      int t;
      std::array<double, 6> r;
      if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf,%lf", &t, &r[0], &r[1],
                      &r[2], &r[3], &r[4], &r[5]) != 7)
        throw std::invalid_argument(origin + ": bad state line: " + line);
      rows.push_back(r);
    }
  }
  if (tau < 0 || completed < 0 || static_cast<int>(rows.size()) != tau + 1)
    throw std::invalid_argument(origin + ": malformed train state");
  TrainableSchedule p = TrainableSchedule::constant(tau, 1.0, 1.0);
  p.step = step;
  for (int t = 0; t <= tau; ++t) {
    p.eta[t] = rows[t][0];
    p.gamma[t] = rows[t][1];
    p.m_eta[t] = rows[t][2];
    p.v_eta[t] = rows[t][3];
    p.m_gamma[t] = rows[t][4];
    p.v_gamma[t] = rows[t][5];
  }
  return {std::move(p), completed};
}

}  // namespace dulqa
