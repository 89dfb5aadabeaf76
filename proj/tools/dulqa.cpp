// dulqa command-line tool: generate / run / train / tune / bench / verify.
// Exit codes: 0 success, 2 validation error, 3 numerical divergence,
// 4 self-test failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dulqa/dulqa.hpp"

namespace fs = std::filesystem;
using namespace dulqa;

namespace {

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  int n = 0;
  int count = 1;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

int cmd_generate(const GenerateArgs& a) {
  if (a.count < 1) throw std::invalid_argument("generate: count must be >= 1");
  fs::create_directories(a.out_dir);
  for (int i = 0; i < a.count; ++i) {
    const std::uint64_t seed = a.seed + static_cast<std::uint64_t>(i);
    const IsingInstance inst = generate_sk(a.n, seed);
    const fs::path path = fs::path(a.out_dir) /
                          ("sk_n" + std::to_string(a.n) + "_s" + std::to_string(seed) +
                           ".txt");
    write_instance(path.string(), inst, file_header(seed, {}));
    std::cout << path.string() << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// run

struct RunArgs {
  std::string instance;
  std::string checkpoint;
  std::string out;
  int tau = -1;
  int restarts = 1;
  std::uint64_t seed = 0;
  double eta = 0.1;
  double gamma = 1.0;
  double f = 0.5;
  bool w0_zero = false;
  int threads = 1;
};

int cmd_run(const RunArgs& a) {
  if (a.restarts < 1) throw std::invalid_argument("run: restarts must be >= 1");
  const IsingInstance inst = read_instance(a.instance);

  AnnealSchedule sched;
  std::vector<std::string> inputs{a.instance};
  if (!a.checkpoint.empty()) {
    sched = read_checkpoint(a.checkpoint);
    inputs.push_back(a.checkpoint);
    if (a.tau >= 0 && a.tau != sched.tau())
      throw std::invalid_argument("run: requested tau " + std::to_string(a.tau) +
                                  " does not match checkpoint tau " +
                                  std::to_string(sched.tau()));
  } else {
    if (a.tau < 0) throw std::invalid_argument("run: --tau is required without a checkpoint");
    sched = AnnealSchedule::constant(a.tau, a.eta, a.gamma);
  }

  std::vector<TrajectoryRecord> recs(static_cast<std::size_t>(a.restarts));
  parallel_for(recs.size(), a.threads, [&](std::size_t r) {
    Eigen::ArrayXd w0;
    if (a.w0_zero) {
      w0 = Eigen::ArrayXd::Zero(inst.n());
    } else {
      RngStream rng(a.seed, "run_w0", static_cast<std::uint64_t>(r));
      w0 = init_w0(inst.n(), a.f, rng);
    }
    recs[r] = lqa_run(inst, w0, sched);
  });

  std::string out = file_header(a.seed, inputs);
  out += "restart,t,s,e_w_per_spin,e_ising_per_spin\n";
  for (int r = 0; r < a.restarts; ++r)
    out += recs[static_cast<std::size_t>(r)].to_csv_rows(r);
  // summary rows: per-step statistics across restarts
  const std::size_t steps = recs[0].s.size();
  for (const char* stat : {"mean", "sd", "min"}) {
    for (std::size_t t = 0; t < steps; ++t) {
      std::vector<double> ew(recs.size()), ei(recs.size());
      for (std::size_t r = 0; r < recs.size(); ++r) {
        ew[r] = recs[r].e_w_per_spin[t];
        ei[r] = recs[r].e_ising_per_spin[t];
      }
      double vw = 0.0, vi = 0.0;
      const std::string name(stat);
      if (name == "mean") {
        vw = detail::mean_sd(ew).first;
        vi = detail::mean_sd(ei).first;
      } else if (name == "sd") {
        vw = detail::mean_sd(ew).second;
        vi = detail::mean_sd(ei).second;
      } else {
        vw = ew[0];
        vi = ei[0];
        for (std::size_t r = 1; r < recs.size(); ++r) {
          vw = std::min(vw, ew[r]);
          vi = std::min(vi, ei[r]);
        }
      }
      out += name + "," + std::to_string(t) + "," + g17(recs[0].s[t]) + "," + g17(vw) +
             "," + g17(vi) + "\n";
    }
  }
  write_file(a.out, out);
  std::cout << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config;
  bool resume = false;
  int threads = 1;
};

int cmd_train(const TrainArgs& a) {
  const Config cfg = Config::parse_file(a.config);
  TrainConfig tc;
  tc.n = static_cast<int>(cfg.get_int("n"));
  tc.tau = static_cast<int>(cfg.get_int("tau"));
  tc.n_epoch = static_cast<int>(cfg.get_int("n_epoch"));
  tc.batch_size = static_cast<int>(cfg.get_int("batch_size"));
  tc.eta0 = cfg.get_double("eta0", 0.1);
  tc.gamma0 = cfg.get_double("gamma0", 1.0);
  tc.f = cfg.get_double("f", 0.5);
  tc.outer_lr = cfg.get_double("lr", 1e-3);
  tc.master_seed = cfg.get_u64("master_seed");
  tc.reset_moments = cfg.get_bool("reset_moments", true);
  tc.threads = a.threads;
  const std::string strategy = cfg.get_string("strategy");
  if (strategy == "one_instance")
    tc.strategy = TrainConfig::Strategy::one_instance;
  else if (strategy == "ensemble")
    tc.strategy = TrainConfig::Strategy::ensemble;
  else
    throw std::invalid_argument("train: strategy must be one_instance or ensemble");
  tc.validate();

  const std::string prefix = cfg.get_string("out_prefix");
  const int stop_after = static_cast<int>(cfg.get_int("stop_after_stage", tc.tau));
  const std::string ckpt_path = prefix + ".checkpoint.txt";
  const std::string state_path = prefix + ".state.txt";
  const std::string loss_path = prefix + ".loss.csv";
  const std::string header = file_header(tc.master_seed, {a.config});

  TrainableSchedule start;
  const TrainableSchedule* resume_ptr = nullptr;
  int completed = 0;
  if (a.resume) {
    std::ifstream in(state_path);
    if (!in) throw std::invalid_argument("train: cannot open state file " + state_path);
    std::tie(start, completed) = parse_train_state(in, state_path);
    resume_ptr = &start;
    if (completed >= stop_after) {
      std::cout << ckpt_path << "\n";
      return 0;
    }
  }

  auto on_stage = [&](int stage, const TrainableSchedule& p) {
    write_file(state_path, header + format_train_state(p, stage));
    write_checkpoint(ckpt_path, p.schedule(), header);
    std::cerr << "stage " << stage << "/" << tc.tau << " done\n";
  };

  TrainResult res = incremental_train(tc, on_stage, resume_ptr, completed, stop_after);

  if (a.resume && fs::exists(loss_path)) {
    std::ofstream app(loss_path, std::ios::binary | std::ios::app);
    for (const auto& e : res.loss_log)
      app << e.stage << "," << e.epoch << "," << g17(e.loss) << "\n";
  } else {
    write_file(loss_path, header + format_loss_log(res.loss_log));
  }
  if (res.diverged_items > 0)
    std::cerr << "dropped " << res.diverged_items << " diverged batch items\n";
  std::cout << ckpt_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// tune

struct TuneArgs {
  std::string spec;
  int threads = 1;
};

int cmd_tune(const TuneArgs& a) {
  const Config cfg = Config::parse_file(a.spec);
  const std::string solver = cfg.get_string("solver");
  const int n = static_cast<int>(cfg.get_int("n"));
  const int instances = static_cast<int>(cfg.get_int("instances", 1));
  const int tau = static_cast<int>(cfg.get_int("tau", 20));
  const int restarts = static_cast<int>(cfg.get_int("restarts", 20));
  const int budget = static_cast<int>(cfg.get_int("budget", 50));
  const double f = cfg.get_double("f", 0.5);
  const double gamma = cfg.get_double("gamma", 1.0);
  const std::uint64_t seed = cfg.get_u64("master_seed");
  const std::string prefix = cfg.get_string("out_prefix");

  std::vector<std::shared_ptr<const IsingInstance>> insts;
  for (int i = 0; i < instances; ++i)
    insts.push_back(std::make_shared<const IsingInstance>(
        generate_sk(n, derive_seed(seed, "tune_inst", static_cast<std::uint64_t>(i)))));

  TuneProblem prob = TuneProblem::make(insts, restarts, f, tau, seed);
  prob.gamma = gamma;
  SearchResult res;
  if (solver == "lqa_gd")
    res = tune_lqa_gd(prob, budget, seed, a.threads);
  else if (solver == "lqa_adam")
    res = tune_lqa_adam(prob, budget, seed, a.threads);
  else
    throw std::invalid_argument("tune: solver must be lqa_gd or lqa_adam");

  const std::string header = file_header(seed, {a.spec});
  write_file(prefix + ".trials.csv", header + format_trial_log(res));
  std::string manifest = header;
  manifest += "solver=" + solver + "\n";
  manifest += "n=" + std::to_string(n) + "\n";
  manifest += "instances=" + std::to_string(instances) + "\n";
  manifest += "tau=" + std::to_string(tau) + "\n";
  manifest += "restarts=" + std::to_string(restarts) + "\n";
  manifest += "budget=" + std::to_string(budget) + "\n";
  manifest += "f=" + g17(f) + "\n";
  manifest += "gamma=" + g17(gamma) + "\n";
  if (res.best_index >= 0) {
    manifest += "best_trial=" + std::to_string(res.best_index) + "\n";
    for (const auto& [k, v] : res.best().params)
      manifest += "best_" + k + "=" + g17(v) + "\n";
    manifest += "best_objective=" + g17(res.best().objective) + "\n";
  }
  write_file(prefix + ".manifest.txt", manifest);
  std::cout << prefix + ".trials.csv\n";
  return 0;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::string spec;
  int threads = 1;
};

ExperimentSpec parse_experiment(const Config& cfg, int threads) {
  ExperimentSpec spec;
  const std::string kind = cfg.get_string("kind");
  if (kind == "trajectory")
    spec.kind = ExperimentSpec::Kind::trajectory;
  else if (kind == "crossover")
    spec.kind = ExperimentSpec::Kind::crossover;
  else if (kind == "generalization")
    spec.kind = ExperimentSpec::Kind::generalization;
  else if (kind == "scaling")
    spec.kind = ExperimentSpec::Kind::scaling;
  else
    throw std::invalid_argument("bench: unknown kind '" + kind + "'");

  for (long long v : cfg.get_int_list("sizes")) spec.sizes.push_back(static_cast<int>(v));
  spec.tau = static_cast<int>(cfg.get_int("tau", 20));
  if (cfg.has("taus"))
    for (long long v : cfg.get_int_list("taus")) spec.taus.push_back(static_cast<int>(v));
  spec.restarts = static_cast<int>(cfg.get_int("restarts", 1));
  spec.instances = static_cast<int>(cfg.get_int("instances", 1));
  spec.tune_budget = static_cast<int>(cfg.get_int("tune_budget", 50));
  spec.tune_restarts = static_cast<int>(cfg.get_int("tune_restarts", 20));
  spec.f = cfg.get_double("f", 0.5);
  spec.gamma = cfg.get_double("gamma", 1.0);
  spec.master_seed = cfg.get_u64("master_seed");
  spec.instance_path = cfg.get_string("instance", "");
  spec.exact_gs = cfg.get_bool("exact_gs", false);
  spec.threads = threads;

  for (const std::string& label : cfg.get_list("solvers")) {
    SolverSpec s;
    s.label = label;
    const std::string k = cfg.get_string(label + ".kind");
    if (k == "dulqa")
      s.kind = SolverSpec::Kind::dulqa;
    else if (k == "lqa_gd")
      s.kind = SolverSpec::Kind::lqa_gd;
    else if (k == "lqa_adam")
      s.kind = SolverSpec::Kind::lqa_adam;
    else
      throw std::invalid_argument("bench: solver " + label + ": unknown kind '" + k + "'");
    s.checkpoint = cfg.get_string(label + ".checkpoint", "");
    s.param = cfg.get_double(label + ".param", 0.0);
    spec.solvers.push_back(std::move(s));
  }
  return spec;
}

int cmd_bench(const BenchArgs& a) {
  const Config cfg = Config::parse_file(a.spec);
  const std::string prefix = cfg.get_string("out_prefix");
  const ExperimentSpec spec = parse_experiment(cfg, a.threads);
  spec.validate();

  std::vector<std::string> inputs{a.spec};
  if (!spec.instance_path.empty()) inputs.push_back(spec.instance_path);
  for (const auto& s : spec.solvers)
    if (!s.checkpoint.empty()) inputs.push_back(s.checkpoint);
  const std::string header = file_header(spec.master_seed, inputs);

  std::vector<std::pair<std::string, std::string>> extra;
  std::string csv;
  std::string kind_name = experiment_kind_name(spec.kind);
  switch (spec.kind) {
    case ExperimentSpec::Kind::trajectory: {
      TrajectoryExpResult res = trajectory_experiment(spec);
      csv = res.csv(header);
      for (const auto& [label, v] : res.tuned)
        extra.emplace_back("tuned_" + label, g17(v));
      break;
    }
    case ExperimentSpec::Kind::crossover: {
      CrossoverResult res = crossover_experiment(spec);
      csv = res.csv(header);
      for (const auto& [label, t] : res.crossover_tau)
        extra.emplace_back("crossover_" + label,
                           t ? std::to_string(*t) : std::string("not_reached"));
      break;
    }
    case ExperimentSpec::Kind::generalization: {
      GeneralizationResult res = generalization_experiment(spec);
      csv = res.csv(header);
      break;
    }
    case ExperimentSpec::Kind::scaling: {
      ScalingResult res = scaling_experiment(spec);
      csv = res.csv(header);
      break;
    }
  }
  const std::string csv_path = prefix + "." + kind_name + ".csv";
  write_file(csv_path, csv);
  write_file(prefix + ".manifest.txt", header + bench_manifest(spec, extra));
  std::cout << csv_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// verify: finite-difference and brute-force self-tests

double fd_rel_err(double analytic, double fd) {
  return std::abs(analytic - fd) / std::max(1.0, std::abs(fd));
}

int cmd_verify() {
  int failures = 0;
  auto report = [&](const std::string& name, bool ok, const std::string& detail = "") {
    if (ok) {
      std::cout << "[ok] " << name << "\n";
    } else {
      ++failures;
      std::cout << "[FAIL] " << name << (detail.empty() ? "" : ": " + detail) << "\n";
    }
  };

  const std::uint64_t seed = 20240901;
  const double h = 1e-5;

  // cost derivatives vs central finite differences
  {
    double worst_g = 0.0, worst_h = 0.0, worst_gg = 0.0, worst_dg = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
      const int n = 12;
      const IsingInstance inst = generate_sk(n, derive_seed(seed, "verify_inst", rep));
      RngStream rng(seed, "verify_w", rep);
      Eigen::ArrayXd w(n);
      for (int i = 0; i < n; ++i) w[i] = rng.uniform(-1.0, 1.0);
      const double s = rng.uniform01();
      const double gamma = rng.uniform(0.1, 5.0);
      RelaxedState st(w);

      const Eigen::ArrayXd g = cost_gradient(st, inst, s, gamma);
      for (int i = 0; i < n; ++i) {
        Eigen::ArrayXd wp = w, wm = w;
        wp[i] += h;
        wm[i] -= h;
        const double fd = (cost(RelaxedState(wp), inst, s, gamma) -
                           cost(RelaxedState(wm), inst, s, gamma)) /
                          (2 * h);
        worst_g = std::max(worst_g, fd_rel_err(g[i], fd));
      }

      Eigen::ArrayXd v(n);
      for (int i = 0; i < n; ++i) v[i] = rng.uniform(-1.0, 1.0);
      const Eigen::ArrayXd hv = cost_hvp(st, inst, s, gamma, v);
      const Eigen::ArrayXd gp = cost_gradient(RelaxedState(w + h * v), inst, s, gamma);
      const Eigen::ArrayXd gm = cost_gradient(RelaxedState(w - h * v), inst, s, gamma);
      for (int i = 0; i < n; ++i)
        worst_h = std::max(worst_h, fd_rel_err(hv[i], (gp[i] - gm[i]) / (2 * h)));

      const Eigen::ArrayXd gg = cost_grad_dgamma(st, inst, s, gamma);
      const Eigen::ArrayXd ggp = cost_gradient(st, inst, s, gamma + h);
      const Eigen::ArrayXd ggm = cost_gradient(st, inst, s, gamma - h);
      for (int i = 0; i < n; ++i)
        worst_gg = std::max(worst_gg, fd_rel_err(gg[i], (ggp[i] - ggm[i]) / (2 * h)));

      const double dg = cost_dgamma(st, inst, s, gamma);
      const double fd_dg = (cost(st, inst, s, gamma + h) - cost(st, inst, s, gamma - h)) /
                           (2 * h);
      worst_dg = std::max(worst_dg, fd_rel_err(dg, fd_dg));
    }
    report("cost_gradient vs FD", worst_g < 1e-6, "rel err " + g17(worst_g));
    report("cost_hvp vs FD", worst_h < 1e-5, "rel err " + g17(worst_h));
    report("cost_grad_dgamma vs FD", worst_gg < 1e-6, "rel err " + g17(worst_gg));
    report("cost_dgamma vs FD", worst_dg < 1e-8, "rel err " + g17(worst_dg));
  }

  // adjoint gradients vs FD of the rolled-out loss
  {
    TrainConfig tc;
    tc.n = 8;
    tc.tau = 4;
    tc.n_epoch = 1;
    tc.batch_size = 2;
    tc.master_seed = seed;
    const Batch batch = make_batch(TrainConfig::Strategy::ensemble, tc, 0);
    TrainableSchedule params = TrainableSchedule::constant(tc.tau, 0.15, 1.2);
    const ScheduleGrads g = backward(batch, params, tc.tau);
    double worst = 0.0;
    for (int t = 0; t <= tc.tau; ++t) {
      for (int which = 0; which < 2; ++which) {
        Eigen::ArrayXd& arr = which == 0 ? params.eta : params.gamma;
        const double g_t = which == 0 ? g.d_eta[t] : g.d_gamma[t];
        const double keep = arr[t];
        arr[t] = keep + h;
        const double lp = loss(batch, params, tc.tau);
        arr[t] = keep - h;
        const double lm = loss(batch, params, tc.tau);
        arr[t] = keep;
        worst = std::max(worst, fd_rel_err(g_t, (lp - lm) / (2 * h)));
      }
    }
    report("adjoint backward vs FD", worst < 1e-5, "rel err " + g17(worst));
  }

  // brute force vs direct enumeration
  {
    const int n = 10;
    const IsingInstance inst = generate_sk(n, derive_seed(seed, "verify_bf", 0));
    const GroundTruth gt = brute_force_ground_state(inst);
    double best = std::numeric_limits<double>::infinity();
    for (std::uint64_t k = 0; k < (1ULL << n); ++k) {
      Eigen::ArrayXd sigma(n);
      for (int i = 0; i < n; ++i) sigma[i] = (k >> i) & 1 ? -1.0 : 1.0;
      best = std::min(best, ising_energy(inst, SpinConfig{sigma}));
    }
    report("brute force vs enumeration", gt.energy == best,
           g17(gt.energy) + " vs " + g17(best));
  }

  // determinism of the rollout
  {
    const int n = 16;
    const IsingInstance inst = generate_sk(n, derive_seed(seed, "verify_det", 0));
    RngStream rng(seed, "verify_det_w");
    const Eigen::ArrayXd w0 = init_w0(n, 0.5, rng);
    const AnnealSchedule sched = AnnealSchedule::constant(10, 0.1, 1.0);
    const TrajectoryRecord a = lqa_run(inst, w0, sched);
    const TrajectoryRecord b = lqa_run(inst, w0, sched);
    bool same = true;
    for (int i = 0; i < n; ++i) same = same && a.final_w[i] == b.final_w[i];
    report("rollout determinism", same);
  }

  if (failures > 0) {
    std::cerr << failures << " self-test(s) failed\n";
    return 4;
  }
  std::cout << "all self-tests passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deep-unfolded local quantum annealing toolkit"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "worker threads")->capture_default_str();

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "write SK instance files");
  c_gen->add_option("--n", gen.n, "problem size")->required();
  c_gen->add_option("--count", gen.count, "number of instances")->capture_default_str();
  c_gen->add_option("--seed", gen.seed, "seed of the first instance")->required();
  c_gen->add_option("--out-dir", gen.out_dir, "output directory")->capture_default_str();

  RunArgs run;
  auto* c_run = app.add_subcommand("run", "anneal an instance, write a trajectory CSV");
  c_run->add_option("--instance", run.instance, "instance file")->required();
  c_run->add_option("--checkpoint", run.checkpoint, "trained schedule");
  c_run->add_option("--tau", run.tau, "schedule length (tau+1 updates)");
  c_run->add_option("--eta", run.eta, "constant step size")->capture_default_str();
  c_run->add_option("--gamma", run.gamma, "constant coupling strength")
      ->capture_default_str();
  c_run->add_option("--restarts", run.restarts, "independent starting points")
      ->capture_default_str();
  c_run->add_option("--seed", run.seed, "master seed")->required();
  c_run->add_option("--f", run.f, "w(0) ~ Unif[-f, f)")->capture_default_str();
  c_run->add_flag("--w0-zero", run.w0_zero, "start every restart at w = 0");
  c_run->add_option("--out", run.out, "output CSV path")->required();

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "incremental deep-unfolding training");
  c_train->add_option("--config", train.config, "training config file")->required();
  c_train->add_flag("--resume", train.resume, "resume from the state file");

  TuneArgs tune;
  auto* c_tune = app.add_subcommand("tune", "random-search baseline tuning");
  c_tune->add_option("--spec", tune.spec, "tuning spec file")->required();

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "run a benchmark experiment");
  c_bench->add_option("--spec", bench.spec, "experiment spec file")->required();

  auto* c_verify = app.add_subcommand("verify", "run the built-in self-tests");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  run.threads = tune.threads = bench.threads = threads;
  try {
    if (*c_gen) return cmd_generate(gen);
    if (*c_run) return cmd_run(run);
    if (*c_train) {
      train.threads = threads;
      return cmd_train(train);
    }
    if (*c_tune) return cmd_tune(tune);
    if (*c_bench) return cmd_bench(bench);
    if (*c_verify) return cmd_verify();
  } catch (const divergence_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
