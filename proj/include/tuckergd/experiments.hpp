#pragma once

// Completion studies at desk scale: iteration counts across condition
// numbers, success-rate sweeps over the sampling probability, and full
// convergence curves (optionally with random initialization or noise).

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tuckergd/completion.hpp"
#include "tuckergd/errors.hpp"
#include "tuckergd/factors.hpp"
#include "tuckergd/parallel.hpp"
#include "tuckergd/solver.hpp"

#ifndef TUCKERGD_VERSION
#define TUCKERGD_VERSION "0.1.0"
#endif

namespace tuckergd {

inline constexpr const char* kLibraryVersion = TUCKERGD_VERSION;

enum class ExperimentKind { kKappaSweep, kPhaseTransition, kConvergence };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::kKappaSweep: return "kappa_sweep";
    case ExperimentKind::kPhaseTransition: return "phase_transition";
    default: return "convergence";
  }
}

inline ExperimentKind parse_experiment_kind(const std::string& s) {
  if (s == "kappa_sweep") return ExperimentKind::kKappaSweep;
  if (s == "phase_transition") return ExperimentKind::kPhaseTransition;
  if (s == "convergence") return ExperimentKind::kConvergence;
  throw ParameterError("unknown experiment kind '" + s + "'");
}

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kKappaSweep;
  Index n = 100;
  Index r = 5;
  double p = 0.1;
  /// Phase-transition grid; defaults to {p} when empty.
  std::vector<double> p_list;
  /// Phase-transition sizes; defaults to {n} when empty.
  std::vector<Index> n_list;
  /// Prescribed condition numbers. Empty means a Gaussian core.
  std::vector<double> kappa_list{1, 2, 5, 10};
  double eta = 0.3;
  int max_iters = 200;
  /// Success threshold on the relative error.
  double rel_tol = 1e-3;
  /// Stop a run once rel_tol is reached. Off for plateau studies.
  bool stop_at_tol = true;
  std::vector<std::uint64_t> seeds{1};
  InitKind init = InitKind::kSpectral;
  /// Noise levels in dB; empty means noiseless.
  std::vector<double> snr_db;
  std::vector<Algorithm> algorithms{Algorithm::kScaledGD, Algorithm::kGD};
  std::string output_path;

  void validate() const {
    if (seeds.empty()) throw ParameterError("experiment needs at least one seed");
    for (double k : kappa_list) {
      if (!(k >= 1)) throw ParameterError("kappa values must be >= 1");
    }
    if (algorithms.empty()) throw ParameterError("experiment needs at least one algorithm");
    if (n < 1 || r < 1 || r > n) throw ParameterError("need 1 <= r <= n");
    for (Index m : n_list) {
      if (m < r) throw ParameterError("every n in n_list must be >= r");
    }
    for (double q : ps()) {
      if (!(q > 0 && q <= 1)) throw ParameterError("sampling probabilities must lie in (0, 1]");
    }
    if (!(eta > 0 && eta <= 1)) throw ParameterError("eta must lie in (0, 1]");
    if (max_iters < 1) throw ParameterError("max_iters must be >= 1");
  }

  std::vector<double> ps() const { return p_list.empty() ? std::vector<double>{p} : p_list; }
  std::vector<Index> ns() const { return n_list.empty() ? std::vector<Index>{n} : n_list; }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  std::vector<std::string> algs;
  for (Algorithm a : c.algorithms) algs.push_back(to_string(a));
  j = nlohmann::json{{"kind", to_string(c.kind)},
                     {"n", c.n},
                     {"r", c.r},
                     {"p", c.p},
                     {"p_list", c.p_list},
                     {"n_list", c.n_list},
                     {"kappa_list", c.kappa_list},
                     {"eta", c.eta},
                     {"max_iters", c.max_iters},
                     {"rel_tol", c.rel_tol},
                     {"stop_at_tol", c.stop_at_tol},
                     {"seeds", c.seeds},
                     {"init", to_string(c.init)},
                     {"snr_db", c.snr_db},
                     {"algorithms", algs},
                     {"output_path", c.output_path}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  static const std::vector<std::string> known{"kind",     "n",         "r",           "p",      "p_list",
                                              "n_list",   "kappa_list", "eta",        "max_iters", "rel_tol",
                                              "stop_at_tol", "seeds",   "trials",      "init",   "snr_db",
                                              "algorithms", "output_path"};
  if (!j.is_object()) throw ParameterError("experiment config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ParameterError("unknown experiment config key '" + key + "'");
    }
  }
  try {
    if (j.contains("kind")) c.kind = parse_experiment_kind(j.at("kind").get<std::string>());
    if (j.contains("n")) c.n = j.at("n").get<Index>();
    if (j.contains("r")) c.r = j.at("r").get<Index>();
    if (j.contains("p")) c.p = j.at("p").get<double>();
    if (j.contains("p_list")) c.p_list = j.at("p_list").get<std::vector<double>>();
    if (j.contains("n_list")) c.n_list = j.at("n_list").get<std::vector<Index>>();
    if (j.contains("kappa_list")) c.kappa_list = j.at("kappa_list").get<std::vector<double>>();
    if (j.contains("eta")) c.eta = j.at("eta").get<double>();
    if (j.contains("max_iters")) c.max_iters = j.at("max_iters").get<int>();
    if (j.contains("rel_tol")) c.rel_tol = j.at("rel_tol").get<double>();
    if (j.contains("stop_at_tol")) c.stop_at_tol = j.at("stop_at_tol").get<bool>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("trials")) {
      const int t = j.at("trials").get<int>();
      if (t < 1) throw ParameterError("trials must be >= 1");
      c.seeds.clear();
      for (int s = 1; s <= t; ++s) c.seeds.push_back(static_cast<std::uint64_t>(s));
    }
    if (j.contains("init")) c.init = parse_init(j.at("init").get<std::string>());
    if (j.contains("snr_db")) c.snr_db = j.at("snr_db").get<std::vector<double>>();
    if (j.contains("algorithms")) {
      c.algorithms.clear();
      for (const auto& a : j.at("algorithms")) c.algorithms.push_back(parse_algorithm(a.get<std::string>()));
    }
    if (j.contains("output_path")) c.output_path = j.at("output_path").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("malformed experiment config: ") + e.what());
  }
  c.validate();
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of the canonical JSON form, ignoring the output path.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  nlohmann::json j = c;
  j.erase("output_path");
  return fnv1a64(j.dump());
}

/// 16 lowercase hex digits, the form used in every output file.
inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Single trials

struct TrialSpec {
  Index n = 100;
  Index r = 5;
  double p = 0.1;
  /// Prescribed condition number, or nullopt for a Gaussian core.
  std::optional<double> kappa;
  std::uint64_t seed = 1;
  Algorithm algorithm = Algorithm::kScaledGD;
  InitKind init = InitKind::kSpectral;
  std::optional<double> snr_db;
  double eta = 0.3;
  int max_iters = 200;
  double rel_tol = 1e-3;
  bool stop_at_tol = true;
};

struct RunRecord {
  std::uint64_t config_hash = 0;
  TrialSpec spec;
  /// Condition number of the generated truth.
  double measured_kappa = 0;
  std::vector<IterRecord> iterations;
  /// First iteration with rel_err <= rel_tol, or -1.
  int iters_to_tol = -1;
  bool success = false;
  StopReason stop_reason = StopReason::kMaxIters;
  /// Non-empty when the solver threw.
  std::string error;

  double final_rel_err() const {
    return iterations.empty() ? std::numeric_limits<double>::quiet_NaN() : iterations.back().rel_err;
  }
};

/// Truth, mask, noise and random initialization all derive from spec.seed
/// through separate streams, so runs that differ only in algorithm, kappa or
/// SNR share the same draws.
inline RunRecord run_completion_trial(const TrialSpec& spec) {
  RunRecord rec;
  rec.spec = spec;
  try {
    const Dims dims{spec.n, spec.n, spec.n};
    const Ranks ranks{spec.r, spec.r, spec.r};
    const TruthStyle style = spec.kappa ? TruthStyle::prescribed_kappa(*spec.kappa) : TruthStyle::gaussian();
    const GroundTruth truth = make_ground_truth(dims, ranks, style, spec.seed);
    rec.measured_kappa = truth.sigma.kappa;
    const Tensor3 x = truth.tensor();
    const double sigma_w =
        spec.snr_db ? snr_to_sigma(x.squared_norm(), static_cast<double>(x.size()), *spec.snr_db) : 0.0;
    const ObservationSet obs = observe(x, sample_mask(dims, spec.p, spec.seed), spec.p, sigma_w, spec.seed);
    CompletionParams params;
    params.eta = spec.eta;
    params.max_iters = spec.max_iters;
    params.rel_tol = spec.stop_at_tol ? spec.rel_tol : 0.0;
    params.init = spec.init;
    params.init_seed = spec.seed;
    const Trajectory traj = spec.algorithm == Algorithm::kScaledGD ? solve_completion(obs, ranks, params, &x)
                                                                   : solve_completion_gd(obs, ranks, params, truth);
    rec.iterations = traj.iterations;
    rec.stop_reason = traj.stop_reason;
    rec.iters_to_tol = traj.iterations_to(spec.rel_tol);
    rec.success = rec.stop_reason != StopReason::kDiverged && rec.final_rel_err() <= spec.rel_tol;
  } catch (const Error& e) {
    rec.error = e.what();
    rec.success = false;
  }
  return rec;
}

/// Runs every spec, spreading trials over threads. Output order matches
/// input order.
inline std::vector<RunRecord> run_trials(const std::vector<TrialSpec>& specs, std::uint64_t hash = 0) {
  std::vector<RunRecord> out(specs.size());
  parallel_chunks(static_cast<int>(specs.size()), [&](int i) {
    const auto iu = static_cast<std::size_t>(i);
    out[iu] = run_completion_trial(specs[iu]);
    out[iu].config_hash = hash;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Studies

struct KappaRow {
  double kappa = 1;
  Algorithm algorithm = Algorithm::kScaledGD;
  /// Median iterations to rel_tol. Runs that never got there count as
  /// max_iters + 1, so a censored median is only a lower bound.
  double median_iters = 0;
  bool censored = false;
  int successes = 0;
  int runs = 0;
};

struct KappaSweepResult {
  std::vector<KappaRow> rows;
  std::vector<RunRecord> runs;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline TrialSpec base_spec(const ExperimentConfig& cfg) {
  TrialSpec s;
  s.n = cfg.n;
  s.r = cfg.r;
  s.p = cfg.p;
  s.init = cfg.init;
  s.eta = cfg.eta;
  s.max_iters = cfg.max_iters;
  s.rel_tol = cfg.rel_tol;
  s.stop_at_tol = cfg.stop_at_tol;
  return s;
}

inline KappaSweepResult run_kappa_sweep(const ExperimentConfig& cfg) {
  if (cfg.kind != ExperimentKind::kKappaSweep) throw ParameterError("config kind is not kappa_sweep");
  cfg.validate();
  if (cfg.kappa_list.empty()) throw ParameterError("kappa sweep needs a kappa list");
  std::vector<TrialSpec> specs;
  for (double kappa : cfg.kappa_list) {
    for (Algorithm alg : cfg.algorithms) {
      for (std::uint64_t seed : cfg.seeds) {
        TrialSpec s = base_spec(cfg);
        s.kappa = kappa;
        s.algorithm = alg;
        s.seed = seed;
        specs.push_back(s);
      }
    }
  }
  KappaSweepResult res;
  res.runs = run_trials(specs, config_hash(cfg));
  std::size_t i = 0;
  for (double kappa : cfg.kappa_list) {
    for (Algorithm alg : cfg.algorithms) {
      KappaRow row;
      row.kappa = kappa;
      row.algorithm = alg;
      std::vector<double> counts;
      for (std::size_t s = 0; s < cfg.seeds.size(); ++s, ++i) {
        const RunRecord& rec = res.runs[i];
        ++row.runs;
        if (rec.iters_to_tol >= 0) {
          ++row.successes;
          counts.push_back(rec.iters_to_tol);
        } else {
          counts.push_back(cfg.max_iters + 1);
        }
      }
      row.median_iters = median(counts);
      row.censored = row.median_iters > cfg.max_iters;
      if (row.censored) row.median_iters = cfg.max_iters;
      res.rows.push_back(row);
    }
  }
  return res;
}

struct PhaseRow {
  Index n = 0;
  double p = 0;
  /// p n^3 / (n^{3/2} r).
  double scaled_sample_size = 0;
  double success_rate = 0;
  int trials = 0;
};

struct PhaseTransitionResult {
  std::vector<PhaseRow> rows;
  std::vector<RunRecord> runs;
};

/// ScaledGD success rates over (n, p), Gaussian-core truth. Success is a
/// relative error <= rel_tol by the end of the run.
inline PhaseTransitionResult run_phase_transition(const ExperimentConfig& cfg) {
  if (cfg.kind != ExperimentKind::kPhaseTransition) throw ParameterError("config kind is not phase_transition");
  cfg.validate();
  std::vector<TrialSpec> specs;
  for (Index n : cfg.ns()) {
    for (double p : cfg.ps()) {
      for (std::uint64_t seed : cfg.seeds) {
        TrialSpec s = base_spec(cfg);
        s.n = n;
        s.p = p;
        s.kappa.reset();
        s.algorithm = Algorithm::kScaledGD;
        s.seed = seed;
        specs.push_back(s);
      }
    }
  }
  PhaseTransitionResult res;
  res.runs = run_trials(specs, config_hash(cfg));
  std::size_t i = 0;
  for (Index n : cfg.ns()) {
    for (double p : cfg.ps()) {
      PhaseRow row;
      row.n = n;
      row.p = p;
      const double nd = static_cast<double>(n);
      row.scaled_sample_size = p * nd * nd * nd / (std::pow(nd, 1.5) * static_cast<double>(cfg.r));
      int ok = 0;
      for (std::size_t s = 0; s < cfg.seeds.size(); ++s, ++i) ok += res.runs[i].success ? 1 : 0;
      row.trials = static_cast<int>(cfg.seeds.size());
      row.success_rate = static_cast<double>(ok) / row.trials;
      res.rows.push_back(row);
    }
  }
  return res;
}

/// One run per (algorithm, kappa or Gaussian core, SNR level, seed).
inline std::vector<RunRecord> run_convergence(const ExperimentConfig& cfg) {
  if (cfg.kind != ExperimentKind::kConvergence) throw ParameterError("config kind is not convergence");
  cfg.validate();
  std::vector<std::optional<double>> kappas;
  for (double k : cfg.kappa_list) kappas.emplace_back(k);
  if (kappas.empty()) kappas.emplace_back(std::nullopt);
  std::vector<std::optional<double>> snrs;
  for (double s : cfg.snr_db) snrs.emplace_back(s);
  if (snrs.empty()) snrs.emplace_back(std::nullopt);
  std::vector<TrialSpec> specs;
  for (Algorithm alg : cfg.algorithms) {
    for (const auto& kappa : kappas) {
      for (const auto& snr : snrs) {
        for (std::uint64_t seed : cfg.seeds) {
          TrialSpec s = base_spec(cfg);
          s.algorithm = alg;
          s.kappa = kappa;
          s.snr_db = snr;
          s.seed = seed;
          specs.push_back(s);
        }
      }
    }
  }
  return run_trials(specs, config_hash(cfg));
}

struct PlateauStats {
  /// Mean relative error over the last `window` recorded iterations.
  double plateau = 0;
  /// First iteration whose error is within `factor` times the plateau.
  int iters_to_plateau = -1;
};

inline PlateauStats plateau_stats(const std::vector<IterRecord>& its, int window = 10, double factor = 2.0) {
  PlateauStats st;
  if (its.empty()) return st;
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(window), its.size());
  double sum = 0;
  for (std::size_t i = its.size() - w; i < its.size(); ++i) sum += its[i].rel_err;
  st.plateau = sum / static_cast<double>(w);
  for (const auto& rec : its) {
    if (rec.rel_err <= factor * st.plateau) {
      st.iters_to_plateau = rec.iter;
      break;
    }
  }
  return st;
}

// ---------------------------------------------------------------------------
// Output

inline void write_runs_csv(std::ostream& os, const std::vector<RunRecord>& runs) {
  os << "config_hash,algorithm,n,p,kappa,snr_db,seed,iter,rel_err,wall_ms\n";
  os << std::setprecision(17);
  for (const RunRecord& r : runs) {
    const double kappa = r.spec.kappa ? *r.spec.kappa : r.measured_kappa;
    const double snr = r.spec.snr_db ? *r.spec.snr_db : std::numeric_limits<double>::quiet_NaN();
    for (const IterRecord& it : r.iterations) {
      os << hash_hex(r.config_hash) << ',' << to_string(r.spec.algorithm) << ',' << r.spec.n << ',' << r.spec.p << ','
         << kappa << ',' << snr << ',' << r.spec.seed << ',' << it.iter << ',' << it.rel_err << ',' << it.wall_ms
         << '\n';
    }
  }
}

inline nlohmann::json run_summary_json(const RunRecord& r) {
  nlohmann::json j{{"algorithm", to_string(r.spec.algorithm)},
                   {"n", r.spec.n},
                   {"p", r.spec.p},
                   {"seed", r.spec.seed},
                   {"measured_kappa", r.measured_kappa},
                   {"iters_to_tol", r.iters_to_tol},
                   {"success", r.success},
                   {"stop_reason", to_string(r.stop_reason)},
                   {"final_rel_err", r.final_rel_err()}};
  if (r.spec.kappa) j["kappa"] = *r.spec.kappa;
  if (r.spec.snr_db) j["snr_db"] = *r.spec.snr_db;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

inline nlohmann::json summary_header(const ExperimentConfig& cfg) {
  return nlohmann::json{
      {"library_version", kLibraryVersion}, {"config_hash", hash_hex(config_hash(cfg))}, {"config", cfg}};
}

inline nlohmann::json summary_json(const ExperimentConfig& cfg, const KappaSweepResult& res) {
  nlohmann::json j = summary_header(cfg);
  for (const KappaRow& row : res.rows) {
    j["table"].push_back({{"kappa", row.kappa},
                          {"algorithm", to_string(row.algorithm)},
                          {"median_iters", row.median_iters},
                          {"censored", row.censored},
                          {"successes", row.successes},
                          {"runs", row.runs}});
  }
  for (const RunRecord& r : res.runs) j["runs"].push_back(run_summary_json(r));
  return j;
}

inline nlohmann::json summary_json(const ExperimentConfig& cfg, const PhaseTransitionResult& res) {
  nlohmann::json j = summary_header(cfg);
  for (const PhaseRow& row : res.rows) {
    j["table"].push_back({{"n", row.n},
                          {"p", row.p},
                          {"scaled_sample_size", row.scaled_sample_size},
                          {"success_rate", row.success_rate},
                          {"trials", row.trials}});
  }
  return j;
}

inline nlohmann::json summary_json(const ExperimentConfig& cfg, const std::vector<RunRecord>& runs) {
  nlohmann::json j = summary_header(cfg);
  for (const RunRecord& r : runs) {
    nlohmann::json row = run_summary_json(r);
    const PlateauStats st = plateau_stats(r.iterations);
    row["plateau_rel_err"] = st.plateau;
    row["iters_to_plateau"] = st.iters_to_plateau;
    j["runs"].push_back(row);
  }
  return j;
}

}  // namespace tuckergd
