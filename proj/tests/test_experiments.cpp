#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"

using namespace tuckergd;

namespace {

ExperimentConfig small_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  c.n = 30;
  c.r = 2;
  c.p = 0.3;
  c.kappa_list = {1, 10};
  c.max_iters = 60;
  c.seeds = {1, 2, 3};
  c.algorithms = {Algorithm::kScaledGD};
  return c;
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string line; std::getline(is, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(ExperimentConfig, JsonRoundTrip) {
  ExperimentConfig c = small_config(ExperimentKind::kConvergence);
  c.snr_db = {40, 60};
  c.init = InitKind::kRandom;
  c.output_path = "out/run";
  const nlohmann::json j = c;
  const auto back = j.get<ExperimentConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(back.kind, ExperimentKind::kConvergence);
  EXPECT_EQ(back.snr_db, (std::vector<double>{40, 60}));
}

TEST(ExperimentConfig, MissingKeysKeepDefaults) {
  const auto c = nlohmann::json::parse(R"({"kind": "kappa_sweep"})").get<ExperimentConfig>();
  EXPECT_EQ(c.n, 100);
  EXPECT_EQ(c.r, 5);
  EXPECT_EQ(c.p, 0.1);
  EXPECT_EQ(c.eta, 0.3);
  EXPECT_EQ(c.kappa_list, (std::vector<double>{1, 2, 5, 10}));
}

TEST(ExperimentConfig, TrialsExpandToSeeds) {
  const auto c = nlohmann::json::parse(R"({"kind": "phase_transition", "trials": 4})").get<ExperimentConfig>();
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2, 3, 4}));
}

TEST(ExperimentConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(nlohmann::json::parse(R"({"kind": "kappa_sweep", "etaa": 0.3})").get<ExperimentConfig>(),
               ParameterError);
  EXPECT_THROW(nlohmann::json::parse(R"({"kind": "sweep"})").get<ExperimentConfig>(), ParameterError);
  EXPECT_THROW(nlohmann::json::parse(R"({"p": 0})").get<ExperimentConfig>(), ParameterError);
  EXPECT_THROW(nlohmann::json::parse(R"({"kappa_list": [0.5]})").get<ExperimentConfig>(), ParameterError);
  EXPECT_THROW(nlohmann::json::parse(R"({"n": "ten"})").get<ExperimentConfig>(), ParameterError);
  EXPECT_THROW(nlohmann::json::parse(R"({"algorithms": ["sgd"]})").get<ExperimentConfig>(), ParameterError);
  EXPECT_THROW(nlohmann::json::parse("[1, 2]").get<ExperimentConfig>(), ParameterError);
}

TEST(ExperimentConfig, HashIgnoresOutputPathOnly) {
  ExperimentConfig a = small_config(ExperimentKind::kKappaSweep);
  ExperimentConfig b = a;
  b.output_path = "elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.eta = 0.2;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(hash_hex(0xabcULL), "0000000000000abc");
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Trials, SharedDrawsAcrossAlgorithms) {
  TrialSpec s;
  s.n = 20;
  s.r = 2;
  s.p = 0.4;
  s.kappa = 2.0;
  s.max_iters = 5;
  s.stop_at_tol = false;
  const RunRecord a = run_completion_trial(s);
  s.algorithm = Algorithm::kGD;
  const RunRecord b = run_completion_trial(s);
  ASSERT_TRUE(a.error.empty());
  ASSERT_TRUE(b.error.empty());
  // Same truth, mask and initialization: identical starting error.
  EXPECT_EQ(a.iterations.front().rel_err, b.iterations.front().rel_err);
  EXPECT_EQ(a.iterations.size(), 6u);
  EXPECT_NEAR(a.measured_kappa, 2.0, 1e-8);
}

TEST(Trials, ErrorsAreCapturedPerRun) {
  TrialSpec s;
  s.n = 5;
  s.r = 2;
  s.kappa = 3.0;
  s.r = 6;  // rank above the dimension
  const RunRecord rec = run_completion_trial(s);
  EXPECT_FALSE(rec.error.empty());
  EXPECT_FALSE(rec.success);
}

TEST(Trials, OutputIndependentOfThreadCount) {
  std::vector<TrialSpec> specs;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    TrialSpec s;
    s.n = 20;
    s.r = 2;
    s.p = 0.3;
    s.seed = seed;
    s.max_iters = 10;
    specs.push_back(s);
  }
  const int saved = num_threads();
  set_num_threads(1);
  const auto a = run_trials(specs, 7);
  set_num_threads(4);
  const auto b = run_trials(specs, 7);
  set_num_threads(saved);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].spec.seed, specs[i].seed);
    EXPECT_EQ(a[i].config_hash, 7u);
    ASSERT_EQ(a[i].iterations.size(), b[i].iterations.size());
    for (std::size_t t = 0; t < a[i].iterations.size(); ++t) {
      EXPECT_EQ(a[i].iterations[t].rel_err, b[i].iterations[t].rel_err);
    }
  }
}

TEST(KappaSweep, ScaledGDCountsOverlap) {
  const KappaSweepResult res = run_kappa_sweep(small_config(ExperimentKind::kKappaSweep));
  ASSERT_EQ(res.rows.size(), 2u);
  ASSERT_EQ(res.runs.size(), 6u);
  for (const KappaRow& row : res.rows) {
    EXPECT_EQ(row.runs, 3);
    EXPECT_EQ(row.successes, 3);
    EXPECT_FALSE(row.censored);
  }
  EXPECT_LE(std::abs(res.rows[0].median_iters - res.rows[1].median_iters), 3);
}

TEST(KappaSweep, CensoredMediansAreFlagged) {
  ExperimentConfig c = small_config(ExperimentKind::kKappaSweep);
  c.kappa_list = {10};
  c.algorithms = {Algorithm::kGD};
  c.max_iters = 3;
  const KappaSweepResult res = run_kappa_sweep(c);
  ASSERT_EQ(res.rows.size(), 1u);
  EXPECT_TRUE(res.rows[0].censored);
  EXPECT_EQ(res.rows[0].median_iters, 3);
  EXPECT_EQ(res.rows[0].successes, 0);
}

TEST(KappaSweep, WrongKindThrows) {
  EXPECT_THROW(run_kappa_sweep(small_config(ExperimentKind::kConvergence)), ParameterError);
  EXPECT_THROW(run_phase_transition(small_config(ExperimentKind::kKappaSweep)), ParameterError);
  EXPECT_THROW(run_convergence(small_config(ExperimentKind::kPhaseTransition)), ParameterError);
}

TEST(PhaseTransition, FullObservationAlwaysSucceeds) {
  ExperimentConfig c = small_config(ExperimentKind::kPhaseTransition);
  c.n = 50;
  c.r = 5;
  c.p_list = {1.0};
  c.kappa_list.clear();
  c.max_iters = 100;
  c.seeds = {1, 2, 3, 4, 5};
  const PhaseTransitionResult res = run_phase_transition(c);
  ASSERT_EQ(res.rows.size(), 1u);
  EXPECT_EQ(res.rows[0].success_rate, 1.0);
  EXPECT_EQ(res.rows[0].trials, 5);
  const double scaled = 1.0 * 50 * 50 * 50 / (std::pow(50.0, 1.5) * 5);
  EXPECT_NEAR(res.rows[0].scaled_sample_size, scaled, 1e-12 * scaled);
}

TEST(PhaseTransition, GridIsOrderedAndMonotone) {
  ExperimentConfig c = small_config(ExperimentKind::kPhaseTransition);
  c.n_list = {20, 30};
  c.p_list = {0.01, 0.5};
  c.seeds = {1, 2, 3, 4};
  const PhaseTransitionResult res = run_phase_transition(c);
  ASSERT_EQ(res.rows.size(), 4u);
  EXPECT_EQ(res.rows[0].n, 20);
  EXPECT_EQ(res.rows[1].p, 0.5);
  EXPECT_EQ(res.rows[2].n, 30);
  for (int k : {0, 2}) {
    EXPECT_EQ(res.rows[static_cast<std::size_t>(k)].success_rate, 0.0);
    EXPECT_EQ(res.rows[static_cast<std::size_t>(k + 1)].success_rate, 1.0);
  }
}

TEST(Convergence, NoisePlateausScaleWithSnr) {
  ExperimentConfig c = small_config(ExperimentKind::kConvergence);
  c.n = 40;
  c.r = 2;
  c.p = 0.2;
  c.kappa_list = {2};
  c.snr_db = {40, 60, 80};
  c.seeds = {1};
  c.max_iters = 80;
  c.stop_at_tol = false;
  const auto runs = run_convergence(c);
  ASSERT_EQ(runs.size(), 3u);
  std::vector<double> plateaus;
  for (const RunRecord& r : runs) {
    EXPECT_TRUE(r.error.empty());
    EXPECT_EQ(static_cast<int>(r.iterations.size()), 81);
    plateaus.push_back(plateau_stats(r.iterations).plateau);
  }
  for (int i = 0; i < 2; ++i) {
    const double ratio = plateaus[static_cast<std::size_t>(i)] / plateaus[static_cast<std::size_t>(i + 1)];
    EXPECT_GE(ratio, 5) << "levels " << i;
    EXPECT_LE(ratio, 20) << "levels " << i;
  }
}

TEST(PlateauStats, GeometricDecayToFloor) {
  std::vector<IterRecord> its;
  for (int t = 0; t <= 60; ++t) its.push_back({t, 0, std::max(std::pow(0.5, t), 1e-6), 0});
  const PlateauStats st = plateau_stats(its);
  EXPECT_NEAR(st.plateau, 1e-6, 1e-18);
  // 0.5^19 = 1.9e-6 is the first value within twice the floor.
  EXPECT_EQ(st.iters_to_plateau, 19);
  EXPECT_EQ(plateau_stats({}).iters_to_plateau, -1);
}

TEST(Output, RunsCsvHasOneRowPerIteration) {
  RunRecord r;
  r.config_hash = 0x1234;
  r.spec.n = 10;
  r.spec.kappa = 2.0;
  r.spec.seed = 3;
  r.iterations = {{0, 1.0, 0.5, 0.0}, {1, 0.5, 0.25, 1.5}};
  std::ostringstream os;
  write_runs_csv(os, {r, r});
  const auto lines = lines_of(os.str());
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "config_hash,algorithm,n,p,kappa,snr_db,seed,iter,rel_err,wall_ms");
  EXPECT_EQ(lines[2], "0000000000001234,scaledgd,10,0.10000000000000001,2,nan,3,1,0.25,1.5");
}

TEST(Output, SummaryCarriesVersionAndHash) {
  const ExperimentConfig c = small_config(ExperimentKind::kConvergence);
  const nlohmann::json h = summary_header(c);
  EXPECT_EQ(h["library_version"], kLibraryVersion);
  EXPECT_EQ(h["config_hash"], hash_hex(config_hash(c)));
  EXPECT_EQ(h["config"]["n"], 30);
}
