// Command-line front end: generators, solvers, probes and experiments.
//
// Exit codes: 0 success, 1 solver divergence, 2 input or contract errors.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "tuckergd/tuckergd.hpp"

using namespace tuckergd;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDiverged = 1;
constexpr int kExitError = 2;

/// "100" -> (100,100,100); "30,40,50" -> (30,40,50).
Dims parse_triple(const std::string& s, const char* what) {
  std::vector<Index> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long x = std::stoll(item, &used);
      if (used != item.size() || x < 1) throw std::invalid_argument(item);
      v.push_back(static_cast<Index>(x));
    } catch (const std::logic_error&) {
      throw ParameterError(std::string("invalid ") + what + " '" + s + "'");
    }
  }
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() == 3) return {v[0], v[1], v[2]};
  throw ParameterError(std::string(what) + " must be one integer or three comma-separated integers");
}

TruthStyle parse_style(const std::string& s) {
  if (s == "gaussian") return TruthStyle::gaussian();
  if (s.rfind("kappa:", 0) == 0) {
    try {
      return TruthStyle::prescribed_kappa(std::stod(s.substr(6)));
    } catch (const std::logic_error&) {
    }
  }
  throw ParameterError("style must be 'gaussian' or 'kappa:<value>', got '" + s + "'");
}

Tensor3 load_tensor(const std::string& path) {
  auto is = io::open_input(path);
  return io::read_tns3(is);
}

nlohmann::json load_json(const std::string& path) {
  auto is = io::open_input(path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("cannot parse " + path + ": " + e.what());
  }
}

GaussianDesign load_design(const std::string& path) {
  const nlohmann::json j = load_json(path);
  try {
    const auto d = j.at("dims").get<std::vector<Index>>();
    if (d.size() != 3) throw FormatError("design dims must have three entries");
    return GaussianDesign(j.at("m").get<Index>(), {d[0], d[1], d[2]}, j.at("seed").get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed design descriptor " + path + ": " + e.what());
  }
}

/// Timings are the only non-reproducible output; --deterministic zeroes them.
bool g_zero_timings = false;

void strip_timings(std::vector<IterRecord>& its) {
  if (!g_zero_timings) return;
  for (IterRecord& r : its) r.wall_ms = 0;
}

void write_trajectory(const std::string& path, Trajectory t) {
  strip_timings(t.iterations);
  io::write_file_atomic(path, [&](std::ostream& os) { write_trajectory_csv(os, t); });
}

void report_trajectory(const Trajectory& t) {
  const IterRecord& last = t.iterations.back();
  nlohmann::json j{{"iterations", last.iter},
                   {"stop_reason", to_string(t.stop_reason)},
                   {"converged", t.converged},
                   {"loss", last.loss},
                   {"wall_ms", last.wall_ms}};
  if (!std::isnan(last.rel_err)) j["rel_err"] = last.rel_err;
  std::cout << j.dump() << '\n';
}

int trajectory_exit(const Trajectory& t) { return t.stop_reason == StopReason::kDiverged ? kExitDiverged : kExitOk; }

struct SolverFlags {
  double eta = 0.3;
  int max_iters = 500;
  double rel_tol = 1e-3;
  std::string alg = "scaledgd";
  std::string traj;
  std::string out;
  std::string truth;

  void add(CLI::App* sub) {
    sub->add_option("--eta", eta, "Step size in (0, 1]");
    sub->add_option("--max-iters", max_iters, "Iteration cap");
    sub->add_option("--rel-tol", rel_tol,
                    "Relative error target with --truth, otherwise relative loss change over 5 iterations");
    sub->add_option("--alg", alg, "scaledgd or gd (gd needs --truth for sigma_max)")
        ->check(CLI::IsMember({"scaledgd", "gd"}));
    sub->add_option("--traj", traj, "Trajectory CSV (iter,loss,rel_err,wall_ms)");
    sub->add_option("--out", out, "Final factors (TFQ1)");
    sub->add_option("--truth", truth, "Ground-truth tensor (TNS3) for error tracking")->check(CLI::ExistingFile);
  }

  void apply(SolverParams& p) const {
    p.eta = eta;
    p.max_iters = max_iters;
    p.rel_tol = rel_tol;
  }

  void save(const Trajectory& t) const {
    if (!traj.empty()) write_trajectory(traj, t);
    if (!out.empty()) io::write_file_atomic(out, [&](std::ostream& os) { io::write_tfq1(os, t.final); });
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tucker tensor estimation by scaled gradient descent"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();

  int threads = num_threads();
  bool deterministic = false;
  std::uint64_t seed = 1;
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--deterministic", deterministic, "Serial execution and zeroed timing columns");

  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", seed, "Random seed (TUCKER_SEED overrides)"); };

  // gen-truth
  std::string n_str = "100", r_str = "5", style_str = "gaussian", out_path, factors_path;
  auto* gen = app.add_subcommand("gen-truth", "Generate a ground-truth tensor");
  gen->add_option("--n", n_str, "Dimensions: n or n1,n2,n3");
  gen->add_option("--r", r_str, "Multilinear rank: r or r1,r2,r3");
  gen->add_option("--style", style_str, "gaussian or kappa:<value>");
  gen->add_option("--out", out_path, "Output tensor (TNS3)")->required();
  gen->add_option("--factors", factors_path, "Also write the factors (TFQ1)");
  add_seed(gen);

  // sample
  std::string sample_truth, design_path;
  double p = 0.1;
  std::optional<double> snr_db;
  long long m = 0;
  auto* sample = app.add_subcommand("sample", "Observe a tensor: Bernoulli entries (--p) or Gaussian measurements (--m)");
  sample->add_option("--truth", sample_truth, "Tensor to observe (TNS3)")->required()->check(CLI::ExistingFile);
  auto* p_opt = sample->add_option("--p", p, "Sampling probability; writes OBS1");
  auto* m_opt = sample->add_option("--m", m, "Measurement count; writes YVC1 plus a design descriptor");
  p_opt->excludes(m_opt);
  sample->add_option("--snr", snr_db, "Additive noise level in dB (entry sampling only)");
  sample->add_option("--out", out_path, "Observations (OBS1) or measurements (YVC1)")->required();
  sample->add_option("--design", design_path, "Design descriptor JSON (with --m)");
  add_seed(sample);

  // complete
  SolverFlags cflags;
  std::string obs_path, init_str = "spectral";
  bool estimate_p = false;
  std::optional<double> radius;
  auto* complete = app.add_subcommand("complete", "Tensor completion from OBS1 observations");
  complete->add_option("--obs", obs_path, "Observations (OBS1)")->required()->check(CLI::ExistingFile);
  complete->add_option("--r", r_str, "Multilinear rank: r or r1,r2,r3");
  complete->add_option("--init", init_str, "spectral or random")->check(CLI::IsMember({"spectral", "random"}));
  complete->add_flag("--estimate-p", estimate_p, "Use |Omega| / (n1 n2 n3) instead of the stored p");
  complete->add_option("--projection-B", radius, "Enable the scaled projection with this radius");
  cflags.add(complete);
  add_seed(complete);

  // regress
  SolverFlags rflags;
  std::string y_path;
  std::size_t cache_mb = 512;
  auto* regress = app.add_subcommand("regress", "Tensor regression from Gaussian measurements");
  regress->add_option("--design", design_path, "Design descriptor JSON")->required()->check(CLI::ExistingFile);
  regress->add_option("--y", y_path, "Measurements (YVC1)")->required()->check(CLI::ExistingFile);
  regress->add_option("--r", r_str, "Multilinear rank: r or r1,r2,r3");
  regress->add_option("--cache-mb", cache_mb, "Keep the design in memory when it fits this budget (0 = stream)");
  rflags.add(regress);

  // factorize
  SolverFlags fflags;
  std::string target_path, init_factors;
  auto* factorize = app.add_subcommand("factorize", "Fit a Tucker factorization to a dense tensor");
  factorize->add_option("--target", target_path, "Tensor to factorize (TNS3)")->required()->check(CLI::ExistingFile);
  factorize->add_option("--r", r_str, "Multilinear rank: r or r1,r2,r3");
  factorize->add_option("--init-factors", init_factors, "Starting factors (TFQ1); default is the HOSVD")
      ->check(CLI::ExistingFile);
  fflags.add(factorize);

  // trip-probe
  int trials = 100;
  std::string n_probe = "10", r_probe = "1";
  long long m_probe = 4000;
  auto* trip = app.add_subcommand("trip-probe", "Estimate the restricted isometry constant of a Gaussian design");
  trip->add_option("--m", m_probe, "Measurement count");
  trip->add_option("--n", n_probe, "Dimensions: n or n1,n2,n3");
  trip->add_option("--r", r_probe, "Multilinear rank: r or r1,r2,r3");
  trip->add_option("--trials", trials, "Random rank-r test tensors");
  add_seed(trip);

  // experiment
  std::string config_path, exp_out;
  auto* experiment = app.add_subcommand("experiment", "Run a completion study from a JSON config");
  experiment->add_option("--config", config_path, "Experiment config JSON")->required()->check(CLI::ExistingFile);
  experiment->add_option("--out", exp_out, "Output prefix (overrides output_path); writes .csv and .summary.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  if (const char* env = std::getenv("TUCKER_SEED")) {
    try {
      seed = std::stoull(env);
    } catch (const std::logic_error&) {
      std::cerr << "error: TUCKER_SEED must be an unsigned integer\n";
      return kExitError;
    }
  }
  set_num_threads(deterministic ? 1 : threads);
  g_zero_timings = deterministic;

  std::cerr << "# resolved configuration\n" << app.config_to_str(true, false);
  for (const CLI::App* sub : app.get_subcommands()) std::cerr << sub->config_to_str(true, false);
  std::cerr << "seed=" << seed << "\nthreads=" << num_threads() << '\n';

  try {
    if (*gen) {
      const Dims n = parse_triple(n_str, "--n");
      const Dims rr = parse_triple(r_str, "--r");
      const GroundTruth g = make_ground_truth(n, {rr[0], rr[1], rr[2]}, parse_style(style_str), seed);
      io::write_file_atomic(out_path, [&](std::ostream& os) { io::write_tns3(os, g.tensor()); });
      if (!factors_path.empty()) {
        io::write_file_atomic(factors_path, [&](std::ostream& os) { io::write_tfq1(os, g.factors); });
      }
      std::cout << nlohmann::json{{"sigma_max", g.sigma.sigma_max},
                                  {"sigma_min", g.sigma.sigma_min},
                                  {"kappa", g.sigma.kappa},
                                  {"mu", g.mu}}
                       .dump()
                << '\n';
      return kExitOk;
    }

    if (*sample) {
      const Tensor3 x = load_tensor(sample_truth);
      if (m_opt->count() > 0) {
        if (design_path.empty()) throw ParameterError("--m needs --design for the descriptor output");
        if (snr_db) throw ParameterError("--snr applies to entry sampling only");
        GaussianDesign design(static_cast<Index>(m), x.dims(), seed);
        const VectorXd y = design.forward(x);
        const nlohmann::json d{{"m", m}, {"dims", {x.dim(0), x.dim(1), x.dim(2)}}, {"seed", seed}};
        io::write_file_atomic(design_path, [&](std::ostream& os) { os << d.dump(2) << '\n'; });
        io::write_file_atomic(out_path, [&](std::ostream& os) { io::write_yvc1(os, y); });
        std::cout << nlohmann::json{{"m", m}}.dump() << '\n';
      } else {
        const double sigma_w =
            snr_db ? snr_to_sigma(x.squared_norm(), static_cast<double>(x.size()), *snr_db) : 0.0;
        const ObservationSet obs = observe(x, sample_mask(x.dims(), p, seed), p, sigma_w, seed);
        io::write_file_atomic(out_path, [&](std::ostream& os) { io::write_obs1(os, obs); });
        std::cout << nlohmann::json{{"observed", obs.size()}, {"p", p}, {"noise_sigma", sigma_w}}.dump() << '\n';
      }
      return kExitOk;
    }

    if (*complete) {
      auto is = io::open_input(obs_path);
      const ObservationSet obs = io::read_obs1(is);
      const Dims rr = parse_triple(r_str, "--r");
      const Ranks ranks{rr[0], rr[1], rr[2]};
      CompletionParams params;
      cflags.apply(params);
      params.estimate_p = estimate_p;
      params.init = parse_init(init_str);
      params.init_seed = seed;
      if (radius) {
        params.use_projection = true;
        params.projection_B = radius;
      }
      std::optional<Tensor3> truth;
      if (!cflags.truth.empty()) truth = load_tensor(cflags.truth);
      Trajectory t;
      if (parse_algorithm(cflags.alg) == Algorithm::kGD) {
        if (!truth) throw ParameterError("--alg gd needs --truth to obtain sigma_max");
        const double smax = sigma_extremes(*truth, ranks).sigma_max;
        t = detail::solve_completion_impl(obs, ranks, params, &*truth, Algorithm::kGD, smax);
      } else {
        t = solve_completion(obs, ranks, params, truth ? &*truth : nullptr);
      }
      cflags.save(t);
      report_trajectory(t);
      return trajectory_exit(t);
    }

    if (*regress) {
      GaussianDesign design = load_design(design_path);
      auto is = io::open_input(y_path);
      const VectorXd y = io::read_yvc1(is);
      if (y.size() != design.size()) throw DimensionError("measurement count does not match the design");
      if (cache_mb > 0) design.cache(cache_mb << 20);
      const Dims rr = parse_triple(r_str, "--r");
      const Ranks ranks{rr[0], rr[1], rr[2]};
      SolverParams params;
      rflags.apply(params);
      std::optional<Tensor3> truth;
      if (!rflags.truth.empty()) truth = load_tensor(rflags.truth);
      const Algorithm alg = parse_algorithm(rflags.alg);
      if (alg == Algorithm::kGD && !truth) throw ParameterError("--alg gd needs --truth to obtain sigma_max");
      const double smax = truth && alg == Algorithm::kGD ? sigma_extremes(*truth, ranks).sigma_max : 0.0;
      const Trajectory t = solve_regression(design, y, ranks, params, truth ? &*truth : nullptr, alg, smax);
      rflags.save(t);
      report_trajectory(t);
      return trajectory_exit(t);
    }

    if (*factorize) {
      const Tensor3 target = load_tensor(target_path);
      const Dims rr = parse_triple(r_str, "--r");
      const Ranks ranks{rr[0], rr[1], rr[2]};
      FactorQuad f0;
      if (init_factors.empty()) {
        f0 = hosvd(target, ranks);
      } else {
        auto is = io::open_input(init_factors);
        f0 = io::read_tfq1(is);
        if (f0.dims() != target.dims() || f0.ranks() != ranks) {
          throw DimensionError("initial factors do not match the target shape and rank");
        }
      }
      SolverParams params;
      fflags.apply(params);
      const Algorithm alg = parse_algorithm(fflags.alg);
      Objective obj;
      obj.evaluate = [&](const FactorQuad& f) { return factorization_loss_gradients(f, target); };
      obj.truth = &target;
      if (alg == Algorithm::kGD) obj.sigma_max = sigma_extremes(target, ranks).sigma_max;
      const Trajectory t = run_solver(obj, f0, params, alg);
      fflags.save(t);
      report_trajectory(t);
      return trajectory_exit(t);
    }

    if (*trip) {
      const Dims n = parse_triple(n_probe, "--n");
      const Dims rr = parse_triple(r_probe, "--r");
      GaussianDesign design(static_cast<Index>(m_probe), n, seed);
      const TripEstimate est = trip_probe(design, {rr[0], rr[1], rr[2]}, trials, seed);
      std::cout << nlohmann::json{{"delta_hat", est.delta_hat},
                                  {"trials", est.trials},
                                  {"worst_ratio_low", est.worst_ratio_low},
                                  {"worst_ratio_high", est.worst_ratio_high}}
                       .dump()
                << '\n';
      return kExitOk;
    }

    if (*experiment) {
      ExperimentConfig cfg = load_json(config_path).get<ExperimentConfig>();
      if (!exp_out.empty()) cfg.output_path = exp_out;
      if (cfg.output_path.empty()) throw ParameterError("experiment needs an output path (--out or output_path)");
      nlohmann::json summary;
      std::vector<RunRecord> runs;
      switch (cfg.kind) {
        case ExperimentKind::kKappaSweep: {
          auto res = run_kappa_sweep(cfg);
          summary = summary_json(cfg, res);
          runs = std::move(res.runs);
          break;
        }
        case ExperimentKind::kPhaseTransition: {
          auto res = run_phase_transition(cfg);
          summary = summary_json(cfg, res);
          runs = std::move(res.runs);
          break;
        }
        default:
          runs = run_convergence(cfg);
          summary = summary_json(cfg, runs);
          break;
      }
      for (RunRecord& r : runs) strip_timings(r.iterations);
      if (const auto dir = std::filesystem::path(cfg.output_path).parent_path(); !dir.empty()) {
        std::filesystem::create_directories(dir);
      }
      io::write_file_atomic(cfg.output_path + ".csv", [&](std::ostream& os) { write_runs_csv(os, runs); });
      io::write_file_atomic(cfg.output_path + ".summary.json",
                            [&](std::ostream& os) { os << summary.dump(2) << '\n'; });
      if (summary.contains("table")) std::cout << summary["table"].dump() << '\n';
      return kExitOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
