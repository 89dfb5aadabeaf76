// Acceptance runner: executes the eight release criteria end to end at desk
// scale and prints one [PASS]/[FAIL] line per criterion. Criteria 3-7 share
// one artifact pipeline (training runs, benchmark sweeps, CSV outputs);
// criterion 8 re-runs that pipeline at 8 threads and byte-compares the files.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dulqa/dulqa.hpp"
#include "testutil.hpp"

using namespace dulqa;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr std::uint64_t kSeed = 20260813;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  if (!pass) ++g_failures;
  std::printf("[%s] criterion %d: %s -- %s\n", pass ? "PASS" : "FAIL", id,
              name.c_str(), detail.c_str());
  std::fflush(stdout);
}

void note(const std::string& text) {
  std::printf("[note] %s\n", text.c_str());
  std::fflush(stdout);
}

std::string fmt(double v, const char* f = "%.3g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------
// criterion 1: analytic derivatives vs central finite differences

void criterion1() {
  const auto t0 = Clock::now();
  RngStream rng(kSeed, "c1_tuples");
  const double eps = 1e-6;
  double wg = 0.0, wh = 0.0, wgg = 0.0, wdg = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 20;
    IsingInstance inst = generate_sk(n, rng.next_u64());
    for (int i = 0; i < n; ++i) inst.fields[i] = 0.3 * rng.normal();
    Eigen::ArrayXd w(n), v(n);
    for (int i = 0; i < n; ++i) {
      w[i] = rng.uniform(-2.0, 2.0);
      v[i] = rng.normal();
    }
    const double s = rng.uniform01();
    const double gamma = rng.uniform(0.1, 5.0);
    const RelaxedState st(w);

    wg = std::max(wg, testutil::max_rel_err(
                          cost_gradient(st, inst, s, gamma),
                          testutil::fd_cost_gradient(inst, w, s, gamma, eps)));
    wh = std::max(wh, testutil::max_rel_err(
                          cost_hvp(st, inst, s, gamma, v),
                          testutil::fd_cost_hvp(inst, w, s, gamma, v, eps)));
    const Eigen::ArrayXd fd_gg = (cost_gradient(st, inst, s, gamma + eps) -
                                  cost_gradient(st, inst, s, gamma - eps)) /
                                 (2.0 * eps);
    wgg = std::max(wgg, testutil::max_rel_err(cost_grad_dgamma(st, inst, s, gamma),
                                              fd_gg));
    const double fd_dg = (cost(st, inst, s, gamma + eps) -
                          cost(st, inst, s, gamma - eps)) /
                         (2.0 * eps);
    wdg = std::max(wdg, testutil::rel_err(cost_dgamma(st, inst, s, gamma), fd_dg));
  }
  const double dt = seconds_since(t0);
  const bool pass =
      wg < 1e-6 && wh < 1e-5 && wgg < 1e-6 && wdg < 1e-6 && dt < 10.0;
  report(1, "derivative exactness (100 tuples, n=20)", pass,
         "rel err: grad " + fmt(wg) + ", hvp " + fmt(wh) + ", grad_dgamma " +
             fmt(wgg) + ", dgamma " + fmt(wdg) + "; " + fmt(dt) + " s (< 10 s)");
}

// ---------------------------------------------------------------------------
// criterion 2: adjoint backprop vs finite differences of the rolled-out loss

void criterion2() {
  const auto t0 = Clock::now();
  RngStream rng(kSeed, "c2_configs");
  const double eps = 1e-6;
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    TrainConfig tc;
    tc.n = 4 + static_cast<int>(rng.uniform01() * 9.0);          // 4..12
    tc.tau = 1 + static_cast<int>(rng.uniform01() * 6.0);        // 1..6
    tc.batch_size = 1 + static_cast<int>(rng.uniform01() * 3.0); // 1..3
    tc.n_epoch = 1;
    tc.master_seed = rng.next_u64();
    const Batch batch = make_batch(TrainConfig::Strategy::ensemble, tc, rep);

    TrainableSchedule params = TrainableSchedule::constant(
        tc.tau, 0.08 + 0.1 * rng.uniform01(), 0.8 + 0.4 * rng.uniform01());
    const ScheduleGrads g = backward(batch, params, tc.tau);
    for (int t = 0; t <= tc.tau; ++t) {
      for (int which = 0; which < 2; ++which) {
        Eigen::ArrayXd& arr = which == 0 ? params.eta : params.gamma;
        const double analytic = which == 0 ? g.d_eta[t] : g.d_gamma[t];
        const double keep = arr[t];
        arr[t] = keep + eps;
        const double lp = loss(batch, params, tc.tau);
        arr[t] = keep - eps;
        const double lm = loss(batch, params, tc.tau);
        arr[t] = keep;
        worst = std::max(worst,
                         testutil::rel_err(analytic, (lp - lm) / (2.0 * eps)));
      }
    }
  }
  const double dt = seconds_since(t0);
  const bool pass = worst < 1e-5 && dt < 30.0;
  report(2, "adjoint backprop exactness (20 configs)", pass,
         "worst rel err " + fmt(worst) + "; " + fmt(dt) + " s (< 30 s)");
}

// ---------------------------------------------------------------------------
// shared pipeline for criteria 3-7 (re-run at 8 threads for criterion 8)

struct Pipeline {
  std::string dir;
  std::vector<std::string> files;  // artifact names relative to dir

  // criterion 3
  bool c3_bound_ok = true;
  double c3_min_slack = 0.0;
  int c3_hits = 0, c3_restarts = 0;

  // criterion 4
  double c4_seconds = 0.0, c4_train_seconds = 0.0;
  double mean_dulqa = 0.0, mean_gd = 0.0, mean_adam = 0.0;
  bool loss_improved = true;
  double loss_worst_delta = -std::numeric_limits<double>::infinity();

  // criterion 5
  double c5_seconds = 0.0;
  double gen_d100 = 0.0, gen_g100 = 0.0, gen_d200 = 0.0, gen_g200 = 0.0;

  // criterion 6
  std::vector<ScalingRow> scaling_rows;
  std::optional<PowerLawFit> fit_residual;
  std::string scaling_manifest;

  // criterion 7
  std::map<int, double> early_e_w;  // t in {0,1,2} -> mean E_w/N
};

void write_artifact(Pipeline& out, const std::string& name, const std::string& text) {
  write_file(out.dir + "/" + name, text);
  out.files.push_back(name);
}

TrainConfig desk_train_config(int n, int threads) {
  TrainConfig cfg;
  cfg.n = n;
  cfg.tau = 20;
  cfg.n_epoch = 500;
  cfg.batch_size = 50;
  cfg.strategy = TrainConfig::Strategy::ensemble;
  cfg.master_seed = kSeed;
  cfg.threads = threads;
  return cfg;
}

SolverSpec dulqa_from(const TrainableSchedule& params, const std::string& label) {
  SolverSpec s;
  s.kind = SolverSpec::Kind::dulqa;
  s.label = label;
  s.schedule = std::make_shared<const AnnealSchedule>(params.schedule());
  return s;
}

SolverSpec tuned_baseline(SolverSpec::Kind kind, const std::string& label) {
  SolverSpec s;
  s.kind = kind;
  s.label = label;
  s.param = 0.0;  // request tuning
  return s;
}

Pipeline run_pipeline(const std::string& dir, int threads) {
  Pipeline out;
  out.dir = dir;
  fs::create_directories(dir);
  const std::string header = file_header(kSeed, {});

  // ----- criterion 3 artifacts: n=16 training + brute-force bound sweep -----
  TrainConfig c3cfg;
  c3cfg.n = 16;
  c3cfg.tau = 20;
  c3cfg.n_epoch = 200;
  c3cfg.batch_size = 50;
  c3cfg.strategy = TrainConfig::Strategy::one_instance;
  c3cfg.master_seed = kSeed;
  c3cfg.threads = threads;
  const TrainResult tr3 = incremental_train(c3cfg);
  const AnnealSchedule sched3 = tr3.params.schedule();
  write_artifact(out, "c3.checkpoint.txt", format_checkpoint(sched3, header));

  const IsingInstance train_inst =
      generate_sk(16, derive_seed(kSeed, "train_inst", 0, 0));
  const GroundTruth train_gt = brute_force_ground_state(train_inst);

  out.c3_restarts = 50;
  std::vector<double> hit_e(static_cast<std::size_t>(out.c3_restarts));
  parallel_for(hit_e.size(), threads, [&](std::size_t r) {
    RngStream rng(kSeed, "c3_test_w0", r);
    const Eigen::ArrayXd w0 = init_w0(16, 0.5, rng);
    RolloutOptions opts;
    opts.record_observables = false;
    hit_e[r] = ising_energy(
        train_inst, sign_readout(lqa_run(train_inst, w0, sched3, opts).final_w));
  });
  for (double e : hit_e)
    if (e <= train_gt.energy + 1e-9) ++out.c3_hits;

  constexpr int kBoundInstances = 50, kBoundRestarts = 3;
  const char* solver_names[3] = {"dulqa", "lqa_gd", "lqa_adam"};
  std::vector<double> gs(kBoundInstances);
  std::vector<std::array<double, 9>> energies(kBoundInstances);
  parallel_for(static_cast<std::size_t>(kBoundInstances), threads, [&](std::size_t i) {
    const IsingInstance inst = generate_sk(16, derive_seed(kSeed, "c3_inst", i));
    gs[i] = brute_force_ground_state(inst).energy;
    RolloutOptions opts;
    opts.record_observables = false;
    for (int r = 0; r < kBoundRestarts; ++r) {
      RngStream rng(kSeed, "c3_w0", i, static_cast<std::uint64_t>(r));
      const Eigen::ArrayXd w0 = init_w0(16, 0.5, rng);
      energies[i][0 * kBoundRestarts + r] =
          ising_energy(inst, sign_readout(lqa_run(inst, w0, sched3, opts).final_w));
      energies[i][1 * kBoundRestarts + r] = ising_energy(
          inst, sign_readout(
                    lqa_run(inst, w0, AnnealSchedule::constant(20, 0.1, 1.0), opts)
                        .final_w));
      energies[i][2 * kBoundRestarts + r] = ising_energy(
          inst, sign_readout(lqa_adam_run(inst, w0, 20, 0.05, 1.0, opts).final_w));
    }
  });

  out.c3_min_slack = std::numeric_limits<double>::infinity();
  std::string c3csv = header + "instance,solver,restart,e_ising,e_gs\n";
  for (int i = 0; i < kBoundInstances; ++i)
    for (int sv = 0; sv < 3; ++sv)
      for (int r = 0; r < kBoundRestarts; ++r) {
        const double e = energies[static_cast<std::size_t>(i)]
                                 [static_cast<std::size_t>(sv * kBoundRestarts + r)];
        if (e < gs[static_cast<std::size_t>(i)]) out.c3_bound_ok = false;
        out.c3_min_slack =
            std::min(out.c3_min_slack, e - gs[static_cast<std::size_t>(i)]);
        c3csv += std::to_string(i) + "," + solver_names[sv] + "," +
                 std::to_string(r) + "," + g17(e) + "," +
                 g17(gs[static_cast<std::size_t>(i)]) + "\n";
      }
  c3csv += "# training_instance_hits=" + std::to_string(out.c3_hits) + "/" +
           std::to_string(out.c3_restarts) + "\n";
  write_artifact(out, "c3_energies.csv", c3csv);

  // ----- criterion 4 artifacts: n=100 ensemble training + Fig. 3 ordering -----
  const auto t4 = Clock::now();
  const TrainConfig c4cfg = desk_train_config(100, threads);
  const TrainResult tr4 = incremental_train(c4cfg);
  out.c4_train_seconds = seconds_since(t4);
  write_artifact(out, "c4.checkpoint.txt",
                 format_checkpoint(tr4.params.schedule(), header));
  write_artifact(out, "c4.loss.csv", header + format_loss_log(tr4.loss_log));

  // unfold-train invariant: per stage, trailing-100-epoch mean loss <= first-100
  for (int stage = 1; stage <= c4cfg.tau; ++stage) {
    double first = 0.0, last = 0.0;
    for (int e = 0; e < 100; ++e) {
      first += tr4.loss_log[static_cast<std::size_t>((stage - 1) * 500 + e)].loss;
      last += tr4.loss_log[static_cast<std::size_t>((stage - 1) * 500 + 400 + e)].loss;
    }
    const double delta = (last - first) / 100.0;  // negative = improved
    out.loss_worst_delta = std::max(out.loss_worst_delta, delta);
    if (delta > 0.0) out.loss_improved = false;
  }

  ExperimentSpec t_spec;
  t_spec.kind = ExperimentSpec::Kind::trajectory;
  t_spec.sizes = {100};
  t_spec.tau = 20;
  t_spec.restarts = 100;
  t_spec.tune_budget = 50;
  t_spec.tune_restarts = 20;
  t_spec.master_seed = kSeed;
  t_spec.threads = threads;
  t_spec.solvers = {dulqa_from(tr4.params, "dulqa"),
                    tuned_baseline(SolverSpec::Kind::lqa_gd, "lqa_gd"),
                    tuned_baseline(SolverSpec::Kind::lqa_adam, "lqa_adam")};
  const TrajectoryExpResult traj = trajectory_experiment(t_spec);
  write_artifact(out, "c4.trajectory.csv", traj.csv(header));
  {
    std::vector<std::pair<std::string, std::string>> extra;
    for (const auto& [label, v] : traj.tuned) extra.emplace_back("tuned_" + label, g17(v));
    write_artifact(out, "c4.manifest.txt", header + bench_manifest(t_spec, extra));
  }
  for (const auto& row : traj.rows) {
    if (row.t == 21) {
      if (row.solver == "dulqa") out.mean_dulqa = row.mean_e_ising;
      if (row.solver == "lqa_gd") out.mean_gd = row.mean_e_ising;
      if (row.solver == "lqa_adam") out.mean_adam = row.mean_e_ising;
    }
    if (row.solver == "dulqa" && row.t <= 2) out.early_e_w[row.t] = row.mean_e_w;
  }
  out.c4_seconds = seconds_since(t4);

  // ----- criterion 5 artifacts: generalization to fresh n=100 / n=200 -----
  const auto t5 = Clock::now();
  ExperimentSpec g_spec;
  g_spec.kind = ExperimentSpec::Kind::generalization;
  g_spec.sizes = {100, 200};
  g_spec.tau = 20;
  g_spec.instances = 20;
  g_spec.restarts = 20;
  g_spec.tune_budget = 50;
  g_spec.tune_restarts = 20;
  g_spec.master_seed = kSeed;
  g_spec.threads = threads;
  g_spec.solvers = {dulqa_from(tr4.params, "dulqa"),
                    tuned_baseline(SolverSpec::Kind::lqa_gd, "lqa_gd")};
  const GeneralizationResult gen = generalization_experiment(g_spec);
  write_artifact(out, "c5.generalization.csv", gen.csv(header));
  write_artifact(out, "c5.manifest.txt", header + bench_manifest(g_spec));
  out.gen_d100 = gen.final_mean(100, "dulqa");
  out.gen_g100 = gen.final_mean(100, "lqa_gd");
  out.gen_d200 = gen.final_mean(200, "dulqa");
  out.gen_g200 = gen.final_mean(200, "lqa_gd");
  out.c5_seconds = seconds_since(t5);

  // ----- criterion 6 artifacts: per-size checkpoints + scaling sweep -----
  const TrainResult tr50 = incremental_train(desk_train_config(50, threads));
  const TrainResult tr200 = incremental_train(desk_train_config(200, threads));
  write_artifact(out, "c6.checkpoint_n50.txt",
                 format_checkpoint(tr50.params.schedule(), header));
  write_artifact(out, "c6.checkpoint_n200.txt",
                 format_checkpoint(tr200.params.schedule(), header));

  ExperimentSpec s_spec;
  s_spec.kind = ExperimentSpec::Kind::scaling;
  s_spec.sizes = {50, 100, 200};
  s_spec.tau = 20;
  s_spec.instances = 50;
  s_spec.restarts = 50;
  s_spec.master_seed = kSeed;
  s_spec.threads = threads;
  s_spec.solvers = {dulqa_from(tr50.params, "dulqa_n50"),
                    dulqa_from(tr4.params, "dulqa_n100"),
                    dulqa_from(tr200.params, "dulqa_n200")};
  const ScalingResult sc = scaling_experiment(s_spec);
  write_artifact(out, "c6.scaling.csv", sc.csv(header));
  out.scaling_manifest = header + bench_manifest(s_spec);
  write_artifact(out, "c6.manifest.txt", out.scaling_manifest);
  out.scaling_rows = sc.rows;
  out.fit_residual = sc.fit_residual;

  return out;
}

void report_pipeline_criteria(const Pipeline& p) {
  // criterion 3
  const double rate = static_cast<double>(p.c3_hits) / p.c3_restarts;
  report(3, "brute-force bound + ground-state hit rate (50 SK, n=16)",
         p.c3_bound_ok && rate >= 0.30,
         "bound " + std::string(p.c3_bound_ok ? "holds" : "VIOLATED") +
             " (min slack " + fmt(p.c3_min_slack) + "), hits " +
             std::to_string(p.c3_hits) + "/" + std::to_string(p.c3_restarts) +
             " (need >= 30%)");

  // criterion 4
  const bool order4 = p.mean_dulqa <= p.mean_gd && p.mean_dulqa <= p.mean_adam;
  report(4, "desk-scale ordering vs tuned baselines (n=100)",
         order4 && p.c4_seconds < 600.0,
         "final E/N: dulqa " + fmt(p.mean_dulqa, "%.6f") + ", lqa_gd " +
             fmt(p.mean_gd, "%.6f") + ", lqa_adam " + fmt(p.mean_adam, "%.6f") +
             "; " + fmt(p.c4_seconds) + " s (< 600 s, training " +
             fmt(p.c4_train_seconds) + " s)");
  note(std::string("stage-loss improvement (trailing-100 vs first-100 mean): ") +
       (p.loss_improved ? "improved at every stage" : "NOT improved at some stage") +
       ", worst delta " + fmt(p.loss_worst_delta));

  // criterion 5
  const bool order5 = p.gen_d100 <= p.gen_g100 && p.gen_d200 <= p.gen_g200;
  report(5, "generalization to fresh instances (20 x n=100, 20 x n=200)",
         order5 && p.c5_seconds < 1200.0,
         "n=100: dulqa " + fmt(p.gen_d100, "%.6f") + " vs gd " +
             fmt(p.gen_g100, "%.6f") + "; n=200: dulqa " + fmt(p.gen_d200, "%.6f") +
             " vs gd " + fmt(p.gen_g200, "%.6f") + "; " + fmt(p.c5_seconds) +
             " s (< 1200 s)");

  // criterion 6
  bool resid_ok = p.scaling_rows.size() == 3;
  std::string resid_detail = "residuals:";
  for (std::size_t i = 0; i < p.scaling_rows.size(); ++i) {
    const ScalingRow& row = p.scaling_rows[i];
    resid_detail += " n=" + std::to_string(row.n) + " " + fmt(row.residual, "%.4f");
    if (!(row.residual > 0.0)) resid_ok = false;
    if (i > 0 && !(row.residual < p.scaling_rows[i - 1].residual)) resid_ok = false;
  }
  const bool fit_ok =
      p.fit_residual && p.fit_residual->exponent > 0.0 && p.fit_residual->r2 > 0.8;
  const bool manifest_ok =
      p.scaling_manifest.find("reference_omega=" + g17(kRefOmegaResidual)) !=
          std::string::npos &&
      p.scaling_manifest.find("reference_omega_s=" + g17(kRefOmegaSd)) !=
          std::string::npos;
  if (p.fit_residual)
    resid_detail += "; fit exponent " + fmt(p.fit_residual->exponent, "%.4f") +
                    ", r2 " + fmt(p.fit_residual->r2, "%.4f");
  else
    resid_detail += "; fit unavailable";
  resid_detail += manifest_ok ? "; omega refs in manifest"
                              : "; omega refs MISSING from manifest";
  report(6, "scaling shape (n in {50,100,200})", resid_ok && fit_ok && manifest_ok,
         resid_detail);

  // criterion 7
  bool early_ok = p.early_e_w.size() == 3;
  std::string early_detail;
  for (int t = 0; t <= 2; ++t) {
    const auto it = p.early_e_w.find(t);
    if (it == p.early_e_w.end()) {
      early_ok = false;
      continue;
    }
    const double target = -(1.0 - t / 20.0);
    const double diff = std::abs(it->second - target);
    if (!(diff <= 0.05)) early_ok = false;
    if (!early_detail.empty()) early_detail += ", ";
    early_detail += "t=" + std::to_string(t) + ": " + fmt(it->second, "%.4f") +
                    " vs " + fmt(target, "%.4f") + " (|diff| " + fmt(diff, "%.4f") +
                    ")";
  }
  report(7, "early-anneal adiabaticity (E_w/N near -(1-t/tau))", early_ok,
         early_detail + "; tolerance 0.05");
}

void criterion8(const Pipeline& p1, const Pipeline& p8) {
  std::string mismatches;
  int compared = 0;
  for (const std::string& name : p1.files) {
    ++compared;
    const std::string a = testutil::slurp(p1.dir + "/" + name);
    const std::string b = testutil::slurp(p8.dir + "/" + name);
    if (a != b) mismatches += (mismatches.empty() ? "" : ", ") + name;
  }
  report(8, "determinism across thread counts (1 vs 8)", mismatches.empty(),
         mismatches.empty()
             ? std::to_string(compared) + " artifacts byte-identical"
             : "differing artifacts: " + mismatches);
}

}  // namespace

int main(int argc, char** argv) {
  std::string work = "acceptance_work";
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--work-dir" && i + 1 < argc) {
      work = argv[++i];
    } else {
      std::fprintf(stderr, "usage: %s [--work-dir DIR]\n", argv[0]);
      return 2;
    }
  }
  fs::create_directories(work);

  criterion1();
  criterion2();

  note("running the artifact pipeline (criteria 3-7) single-threaded...");
  const auto t0 = Clock::now();
  const Pipeline p1 = run_pipeline(work + "/t1", 1);
  note("pipeline (1 thread) finished in " + fmt(seconds_since(t0)) + " s");
  report_pipeline_criteria(p1);

  note("re-running the pipeline at 8 threads for the determinism check...");
  const auto t8 = Clock::now();
  const Pipeline p8 = run_pipeline(work + "/t8", 8);
  note("pipeline (8 threads) finished in " + fmt(seconds_since(t8)) + " s");
  criterion8(p1, p8);

  if (g_failures == 0) {
    std::printf("acceptance: all 8 criteria passed\n");
    return 0;
  }
  std::printf("acceptance: %d of 8 criteria failed\n", g_failures);
  return 1;
}
