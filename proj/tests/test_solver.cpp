#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace tuckergd;

namespace {

double rel_diff(const Tensor3& a, const Tensor3& b) { return (a - b).norm() / std::max(a.norm(), b.norm()); }

FactorQuad scalar_quad(double u, double v, double w, double s) {
  return {MatrixXd::Constant(1, 1, u), MatrixXd::Constant(1, 1, v), MatrixXd::Constant(1, 1, w),
          Tensor3::constant({1, 1, 1}, s)};
}

SolverParams fixed_iterations(int iters, double eta = 0.3) {
  SolverParams p;
  p.eta = eta;
  p.max_iters = iters;
  p.rel_tol = 0;
  return p;
}

}  // namespace

TEST(ScaledStep, ZeroGradientIsFixedPoint) {
  const FactorQuad f = oracle::random_factors({5, 6, 7}, {2, 2, 3}, 1);
  const FactorQuad g = scaled_step(f, GradientBundle::zeros_like(f), 0.3);
  EXPECT_EQ(g.U, f.U);
  EXPECT_EQ(g.S, f.S);
  const FactorQuad h = plain_step(f, GradientBundle::zeros_like(f), 0.3, 2.0);
  EXPECT_EQ(h.W, f.W);
  EXPECT_EQ(h.S, f.S);
}

TEST(ScaledStep, ScalarToyModelMatchesDiagonalNewtonStep) {
  // f = (1,1,1,s): the Hessian diagonal is (s^2, s^2, s^2, 1) and the
  // gradient (s - s*) (s, s, s, 1), so u+ = 1 - eta (s - s*) / s and
  // s+ = s - eta (s - s*).
  const double s = 2.0, s_star = 0.5, eta = 0.3;
  const Tensor3 target = Tensor3::constant({1, 1, 1}, s_star);
  const FactorQuad f = scalar_quad(1, 1, 1, s);
  const FactorQuad g = scaled_step(f, factorization_gradients(f, target), eta);
  const double u_plus = 1 - eta * (s - s_star) / s;
  EXPECT_NEAR(g.U(0, 0), u_plus, 1e-15);
  EXPECT_NEAR(g.V(0, 0), u_plus, 1e-15);
  EXPECT_NEAR(g.W(0, 0), u_plus, 1e-15);
  EXPECT_NEAR(g.S(0, 0, 0), s - eta * (s - s_star), 1e-15);
}

TEST(ScaledStep, SingularPreconditionerThrows) {
  FactorQuad f = oracle::random_factors({5, 5, 5}, {2, 2, 2}, 1);
  f.S = Tensor3({2, 2, 2});
  EXPECT_THROW(scaled_step(f, GradientBundle::zeros_like(f), 0.3), IllConditionedError);
}

TEST(PlainStep, UnitSigmaIsUniformDescent) {
  const FactorQuad f = oracle::random_factors({4, 5, 6}, {2, 2, 2}, 2);
  const GradientBundle d = oracle::random_direction(f, 3);
  const FactorQuad g = plain_step(f, d, 0.25, 1.0);
  EXPECT_LT((g.U - (f.U - 0.25 * d.grad_U)).norm(), 1e-15);
  EXPECT_LT((g.V - (f.V - 0.25 * d.grad_V)).norm(), 1e-15);
  EXPECT_LT((g.S - (f.S - 0.25 * d.grad_S)).norm(), 1e-15);
  // sigma_max scales only the factor steps.
  const FactorQuad h = plain_step(f, d, 0.25, 2.0);
  EXPECT_LT((h.W - (f.W - 0.0625 * d.grad_W)).norm(), 1e-15);
  EXPECT_LT((h.S - (f.S - 0.25 * d.grad_S)).norm(), 1e-15);
  EXPECT_THROW(plain_step(f, d, 0.25, 0.0), ParameterError);
}

TEST(FactorizationGradients, ZeroAtExactReconstruction) {
  const GroundTruth g = make_ground_truth({6, 7, 8}, {2, 3, 2}, TruthStyle::gaussian(), 3);
  const GradientBundle grad = factorization_gradients(g.factors, g.tensor());
  EXPECT_LT(oracle::bundle_norm(grad), 1e-12 * g.sigma.sigma_max * g.sigma.sigma_max);
}

TEST(FactorizationGradients, ScalarToyModelClosedForm) {
  const double u = 0.7, v = -1.3, w = 2.1, s = 0.4, s_star = 1.9;
  const FactorQuad f = scalar_quad(u, v, w, s);
  const LossGradient lg = factorization_loss_gradients(f, Tensor3::constant({1, 1, 1}, s_star));
  const double r = u * v * w * s - s_star;
  EXPECT_NEAR(lg.loss, 0.5 * r * r, 1e-15);
  EXPECT_NEAR(lg.grad.grad_U(0, 0), r * v * w * s, 1e-14);
  EXPECT_NEAR(lg.grad.grad_V(0, 0), r * u * w * s, 1e-14);
  EXPECT_NEAR(lg.grad.grad_W(0, 0), r * u * v * s, 1e-14);
  EXPECT_NEAR(lg.grad.grad_S(0, 0, 0), r * u * v * w, 1e-14);
}

TEST(FactorizationGradients, MatchExplicitKroneckerOracle) {
  const FactorQuad f = oracle::random_factors({4, 5, 6}, {2, 3, 2}, 4);
  const Tensor3 target = CounterRng(5, Stream::kAux).normal_tensor({4, 5, 6});
  const Tensor3 e = oracle::multilinear_kron(f.U, f.V, f.W, f.S) - target;
  const GradientBundle expected = oracle::gradients_from_residual(f, e, 1.0);
  EXPECT_LT(oracle::bundle_max_rel_diff(factorization_gradients(f, target), expected), 1e-12);
}

TEST(FactorizationGradients, FiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const FactorQuad f = oracle::random_factors({5, 6, 4}, {2, 3, 2}, seed);
    const Tensor3 target = CounterRng(seed, Stream::kAux, 77).normal_tensor({5, 6, 4});
    const auto loss = [&](const FactorQuad& q) { return factorization_loss_gradients(q, target).loss; };
    const GradientBundle g = factorization_gradients(f, target);
    const GradientBundle d = oracle::random_direction(f, seed + 10);
    const double fd = oracle::directional_derivative(loss, f, d);
    const double an = oracle::bundle_dot(g, d);
    EXPECT_NEAR(fd, an, 1e-5 * std::abs(an)) << "seed " << seed;
  }
}

TEST(ScaledGD, EquivariantUnderReparameterization) {
  const GroundTruth truth = make_ground_truth({8, 9, 10}, {2, 3, 2}, TruthStyle::gaussian(), 2);
  const Tensor3 target = truth.tensor();
  FactorQuad a = oracle::perturb_to_distance(truth, 0.1 * truth.sigma.sigma_min, 3);
  FactorQuad b = reparameterize(a, oracle::random_invertible(2, 4, 5), oracle::random_invertible(3, 4, 6),
                                oracle::random_invertible(2, 4, 7));
  for (int t = 0; t < 20; ++t) {
    a = scaled_step(a, factorization_gradients(a, target), 0.3);
    b = scaled_step(b, factorization_gradients(b, target), 0.3);
    EXPECT_LT(rel_diff(reconstruct(a), reconstruct(b)), 1e-9) << "step " << t + 1;
  }
}

TEST(ScaledGD, GradientDescentIsNotEquivariant) {
  const GroundTruth truth = make_ground_truth({8, 9, 10}, {2, 3, 2}, TruthStyle::gaussian(), 2);
  const Tensor3 target = truth.tensor();
  FactorQuad a = oracle::perturb_to_distance(truth, 0.1 * truth.sigma.sigma_min, 3);
  FactorQuad b = reparameterize(a, oracle::random_invertible(2, 4, 5), oracle::random_invertible(3, 4, 6),
                                oracle::random_invertible(2, 4, 7));
  // One step suffices; the reparameterized GD run diverges soon after.
  a = plain_step(a, factorization_gradients(a, target), 0.3, truth.sigma.sigma_max);
  b = plain_step(b, factorization_gradients(b, target), 0.3, truth.sigma.sigma_max);
  const double diff = rel_diff(reconstruct(a), reconstruct(b));
  ASSERT_TRUE(std::isfinite(diff));
  EXPECT_GT(diff, 1e-3);
}

TEST(RunFactorization, StartingAtTruthConvergesImmediately) {
  const GroundTruth g = make_ground_truth({10, 10, 10}, {2, 2, 2}, TruthStyle::prescribed_kappa(3), 1);
  const Trajectory t = run_factorization(g, g.factors, SolverParams{});
  EXPECT_TRUE(t.converged);
  EXPECT_EQ(t.stop_reason, StopReason::kTol);
  ASSERT_EQ(t.iterations.size(), 1u);
  EXPECT_EQ(t.iterations[0].iter, 0);
}

TEST(RunFactorization, ContractsAtKappaFreeRate) {
  const GroundTruth g = make_ground_truth({30, 30, 30}, {3, 3, 3}, TruthStyle::prescribed_kappa(10), 1);
  const FactorQuad f0 = oracle::perturb_to_distance(g, 0.05 * g.sigma.sigma_min, 1);
  const Trajectory t = run_factorization(g, f0, fixed_iterations(30));
  ASSERT_EQ(t.iterations.size(), 31u);
  for (int i = 4; i <= 30; ++i) {
    const double ratio = t.iterations[i].rel_err / t.iterations[i - 1].rel_err;
    EXPECT_LE(ratio, 1 - 0.7 * 0.3) << "iteration " << i;
  }
}

// Starting distance relative to the truth's norm, shared across kappa so that
// both runs begin at the same relative error. It equals 0.05 sigma_min at kappa 10.
double shared_start_fraction(Index n, Index r, std::uint64_t seed) {
  const GroundTruth g = make_ground_truth({n, n, n}, {r, r, r}, TruthStyle::prescribed_kappa(10), seed);
  return 0.05 * g.sigma.sigma_min / g.tensor().norm();
}

TEST(RunFactorization, IterationCountIndependentOfKappa) {
  int counts[2];
  int idx = 0;
  const double c = shared_start_fraction(30, 3, 4);
  for (double kappa : {1.0, 10.0}) {
    const GroundTruth g = make_ground_truth({30, 30, 30}, {3, 3, 3}, TruthStyle::prescribed_kappa(kappa), 4);
    const FactorQuad f0 = oracle::perturb_to_distance(g, c * g.tensor().norm(), 4);
    SolverParams p;
    p.rel_tol = 1e-6;
    p.max_iters = 200;
    const Trajectory t = run_factorization(g, f0, p);
    ASSERT_TRUE(t.converged);
    counts[idx++] = t.iterations.back().iter;
  }
  EXPECT_LE(std::abs(counts[0] - counts[1]), 1) << counts[0] << " vs " << counts[1];
}

TEST(RunFactorization, LossNonIncreasingAfterBurnIn) {
  const GroundTruth g = make_ground_truth({15, 15, 15}, {3, 3, 3}, TruthStyle::prescribed_kappa(5), 2);
  const FactorQuad f0 = oracle::perturb_to_distance(g, 0.1 * g.sigma.sigma_min, 2);
  for (double eta : {0.1, 0.3, 0.4}) {
    const Trajectory t = run_factorization(g, f0, fixed_iterations(40, eta));
    for (std::size_t i = 4; i < t.iterations.size(); ++i) {
      EXPECT_LE(t.iterations[i].loss, t.iterations[i - 1].loss) << "eta " << eta << " iteration " << i;
    }
  }
}

TEST(RunFactorization, GradientDescentMatchesScaledGDAtKappaOne) {
  const GroundTruth g = make_ground_truth({20, 20, 20}, {3, 3, 3}, TruthStyle::prescribed_kappa(1), 3);
  const FactorQuad f0 = oracle::perturb_to_distance(g, 0.05 * g.sigma.sigma_min, 3);
  const Trajectory a = run_factorization(g, f0, fixed_iterations(20), Algorithm::kScaledGD);
  const Trajectory b = run_factorization(g, f0, fixed_iterations(20), Algorithm::kGD);
  for (int i = 1; i <= 20; ++i) {
    const double ra = a.iterations[i].rel_err / a.iterations[i - 1].rel_err;
    const double rb = b.iterations[i].rel_err / b.iterations[i - 1].rel_err;
    EXPECT_NEAR(rb, ra, 0.1 * ra) << "iteration " << i;
  }
}

TEST(RunFactorization, GradientDescentSlowsWithKappa) {
  const double c = shared_start_fraction(20, 3, 5);
  auto iters = [c](double kappa, Algorithm alg) {
    const GroundTruth g = make_ground_truth({20, 20, 20}, {3, 3, 3}, TruthStyle::prescribed_kappa(kappa), 5);
    const FactorQuad f0 = oracle::perturb_to_distance(g, c * g.tensor().norm(), 5);
    SolverParams p;
    p.rel_tol = 1e-4;
    p.max_iters = 2000;
    return run_factorization(g, f0, p, alg).iterations.back().iter;
  };
  EXPECT_GE(iters(10, Algorithm::kGD), 5 * iters(1, Algorithm::kGD));
  EXPECT_LE(std::abs(iters(10, Algorithm::kScaledGD) - iters(1, Algorithm::kScaledGD)), 2);
}

TEST(RunSolver, DivergenceIsReported) {
  Objective obj;
  obj.evaluate = [](const FactorQuad& f) {
    GradientBundle g = GradientBundle::zeros_like(f);
    g.grad_S = f.S * -100.0;
    return LossGradient{f.S.squared_norm(), g};
  };
  obj.sigma_max = 1;
  const FactorQuad f0 = oracle::random_factors({3, 3, 3}, {1, 1, 1}, 1);
  const Trajectory t = run_solver(obj, f0, fixed_iterations(50), Algorithm::kGD);
  EXPECT_EQ(t.stop_reason, StopReason::kDiverged);
  EXPECT_FALSE(t.converged);
  EXPECT_LT(t.iterations.back().iter, 10);
}

TEST(RunSolver, LossPlateauStopsWithoutTruth) {
  const GroundTruth g = make_ground_truth({10, 10, 10}, {2, 2, 2}, TruthStyle::gaussian(), 6);
  Tensor3 target = g.tensor() + CounterRng(6, Stream::kAux).normal_tensor({10, 10, 10}, 0.01);
  Objective obj;
  obj.evaluate = [&](const FactorQuad& f) { return factorization_loss_gradients(f, target); };
  SolverParams p;
  p.max_iters = 500;
  p.rel_tol = 1e-6;
  const Trajectory t = run_solver(obj, oracle::perturb_to_distance(g, 0.1 * g.sigma.sigma_min, 6), p,
                                  Algorithm::kScaledGD);
  EXPECT_EQ(t.stop_reason, StopReason::kTol);
  EXPECT_LT(t.iterations.back().iter, 200);
  EXPECT_TRUE(std::isnan(t.iterations.back().rel_err));
}

TEST(RunSolver, RecordEveryThinsTheTrajectory) {
  const GroundTruth g = make_ground_truth({8, 8, 8}, {2, 2, 2}, TruthStyle::gaussian(), 7);
  SolverParams p = fixed_iterations(23);
  p.record_every = 5;
  const Trajectory t = run_factorization(g, oracle::perturb_to_distance(g, 0.1 * g.sigma.sigma_min, 7), p);
  std::vector<int> its;
  for (const auto& r : t.iterations) its.push_back(r.iter);
  EXPECT_EQ(its, (std::vector<int>{0, 5, 10, 15, 20, 23}));
  EXPECT_EQ(t.iterations[0].wall_ms, 0.0);
}

TEST(RunSolver, InvalidParametersThrow) {
  const GroundTruth g = make_ground_truth({6, 6, 6}, {2, 2, 2}, TruthStyle::gaussian(), 1);
  SolverParams p;
  p.eta = 0;
  EXPECT_THROW(run_factorization(g, g.factors, p), ParameterError);
  p.eta = 1.5;
  EXPECT_THROW(run_factorization(g, g.factors, p), ParameterError);
  p = SolverParams{};
  p.use_projection = true;
  EXPECT_THROW(run_factorization(g, g.factors, p), ParameterError);
  FactorQuad bad = g.factors;
  bad.U(0, 0) = std::nan("");
  EXPECT_THROW(run_factorization(g, bad, SolverParams{}), ContractError);
  EXPECT_THROW(parse_algorithm("adam"), ParameterError);
}

TEST(RunSolver, TrajectoryCsvHeader) {
  Trajectory t;
  t.iterations.push_back({0, 1.5, 0.25, 0});
  std::ostringstream os;
  write_trajectory_csv(os, t);
  EXPECT_EQ(os.str(), "iter,loss,rel_err,wall_ms\n0,1.5,0.25,0\n");
}
