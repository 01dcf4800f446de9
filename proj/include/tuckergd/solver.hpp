#pragma once

// Step rules and the iteration driver shared by every problem.
//
// ScaledGD (one step, all Grams taken at the current iterate):
//   U <- U - eta * grad_U * (breve_U^T breve_U)^-1       (V, W likewise)
//   S <- S - eta * ((U^T U)^-1, (V^T V)^-1, (W^T W)^-1).grad_S
//
// Plain GD baseline:
//   U <- U - eta / sigma_max^2 * grad_U                  (V, W likewise)
//   S <- S - eta * grad_S

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tuckergd/errors.hpp"
#include "tuckergd/factor_quad.hpp"
#include "tuckergd/factors.hpp"
#include "tuckergd/linalg.hpp"
#include "tuckergd/tensor.hpp"

namespace tuckergd {

struct GradientBundle {
  MatrixXd grad_U;
  MatrixXd grad_V;
  MatrixXd grad_W;
  Tensor3 grad_S;

  static GradientBundle zeros_like(const FactorQuad& f) {
    return {MatrixXd::Zero(f.U.rows(), f.U.cols()), MatrixXd::Zero(f.V.rows(), f.V.cols()),
            MatrixXd::Zero(f.W.rows(), f.W.cols()), Tensor3(f.S.dims())};
  }

  const MatrixXd& factor(int mode) const { return mode == 1 ? grad_U : (mode == 2 ? grad_V : grad_W); }

  void check_against(const FactorQuad& f) const {
    if (grad_U.rows() != f.U.rows() || grad_U.cols() != f.U.cols() || grad_V.rows() != f.V.rows() ||
        grad_V.cols() != f.V.cols() || grad_W.rows() != f.W.rows() || grad_W.cols() != f.W.cols() ||
        grad_S.dims() != f.S.dims()) {
      throw DimensionError("gradient bundle shape does not match the factor quadruple");
    }
  }
};

/// Gradients together with the loss value at the same point.
struct LossGradient {
  double loss = 0;
  GradientBundle grad;
};

enum class Algorithm { kScaledGD, kGD };

inline std::string to_string(Algorithm a) { return a == Algorithm::kScaledGD ? "scaledgd" : "gd"; }

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "scaledgd") return Algorithm::kScaledGD;
  if (s == "gd") return Algorithm::kGD;
  throw ParameterError("unknown algorithm '" + s + "' (expected scaledgd or gd)");
}

struct SolverParams {
  double eta = 0.3;
  int max_iters = 500;
  /// Relative error target when a ground truth is attached, otherwise the
  /// threshold on the relative loss change over 5 iterations.
  double rel_tol = 1e-3;
  bool use_projection = false;
  std::optional<double> projection_B;
  int record_every = 1;

  void validate() const {
    if (!(eta > 0 && eta <= 1)) throw ParameterError("eta must lie in (0, 1]");
    if (max_iters < 1) throw ParameterError("max_iters must be >= 1");
    if (!(rel_tol >= 0)) throw ParameterError("rel_tol must be >= 0");
    if (record_every < 1) throw ParameterError("record_every must be >= 1");
    if (use_projection && !(projection_B && *projection_B > 0)) {
      throw ParameterError("projection needs a positive radius B");
    }
  }
};

enum class StopReason { kTol, kMaxIters, kDiverged };

inline std::string to_string(StopReason s) {
  switch (s) {
    case StopReason::kTol: return "tol";
    case StopReason::kMaxIters: return "max_iters";
    default: return "diverged";
  }
}

struct IterRecord {
  int iter = 0;
  double loss = 0;
  /// Relative Frobenius error against the ground truth, NaN without one.
  double rel_err = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0;
};

struct Trajectory {
  std::vector<IterRecord> iterations;
  FactorQuad final;
  bool converged = false;
  StopReason stop_reason = StopReason::kMaxIters;

  /// First recorded iteration with rel_err <= tol, or -1.
  int iterations_to(double tol) const {
    for (const auto& rec : iterations) {
      if (rec.rel_err <= tol) return rec.iter;
    }
    return -1;
  }
};

inline void write_trajectory_csv(std::ostream& os, const Trajectory& t) {
  os << "iter,loss,rel_err,wall_ms\n";
  os << std::setprecision(17);
  for (const auto& r : t.iterations) os << r.iter << ',' << r.loss << ',' << r.rel_err << ',' << r.wall_ms << '\n';
}

namespace detail {

/// M_k(result) = G^-1 M_k(x).
inline Tensor3 solve_mode(const SpdFactor& g, const Tensor3& x, int mode) {
  return tensorize({mode, g.solve(matricize(x, mode).matrix)}, x.dims());
}

}  // namespace detail

inline FactorQuad scaled_step(const FactorQuad& f, const GradientBundle& g, double eta) {
  f.validate();
  g.check_against(f);
  const PrecondState p = factor_grams(f);
  FactorQuad out;
  out.U = f.U - eta * SpdFactor(p.gram_breve_U, 1).solve_right(g.grad_U);
  out.V = f.V - eta * SpdFactor(p.gram_breve_V, 2).solve_right(g.grad_V);
  out.W = f.W - eta * SpdFactor(p.gram_breve_W, 3).solve_right(g.grad_W);
  Tensor3 ds = detail::solve_mode(SpdFactor(p.gram_U, 4), g.grad_S, 1);
  ds = detail::solve_mode(SpdFactor(p.gram_V, 5), ds, 2);
  ds = detail::solve_mode(SpdFactor(p.gram_W, 6), ds, 3);
  out.S = f.S - eta * ds;
  return out;
}

inline FactorQuad plain_step(const FactorQuad& f, const GradientBundle& g, double eta, double sigma_max) {
  if (!(sigma_max > 0)) throw ParameterError("sigma_max must be positive");
  f.validate();
  g.check_against(f);
  const double factor_eta = eta / (sigma_max * sigma_max);
  FactorQuad out;
  out.U = f.U - factor_eta * g.grad_U;
  out.V = f.V - factor_eta * g.grad_V;
  out.W = f.W - factor_eta * g.grad_W;
  out.S = f.S - eta * g.grad_S;
  return out;
}

/// Gradient bundle of <E, (U,V,W).S> style losses given the dense residual
/// tensor E (n1 x n2 x n3), scaled by `scale`:
///   grad_U = scale * M1(E) breve_U = scale * M1(E x2 V^T x3 W^T) M1(S)^T
///   grad_S = scale * (U^T, V^T, W^T).E
inline GradientBundle residual_gradients(const FactorQuad& f, const Tensor3& e, double scale = 1.0) {
  if (e.dims() != f.dims()) {
    throw DimensionError("residual dims " + to_string(e.dims()) + " do not match factor dims " + to_string(f.dims()));
  }
  const Tensor3 ew = mode_product(e, f.W.transpose(), 3);   // n1 x n2 x r3
  const Tensor3 eu = mode_product(e, f.U.transpose(), 1);   // r1 x n2 x n3
  const Tensor3 evw = mode_product(ew, f.V.transpose(), 2); // n1 x r2 x r3
  const Tensor3 euw = mode_product(ew, f.U.transpose(), 1); // r1 x n2 x r3
  const Tensor3 euv = mode_product(eu, f.V.transpose(), 2); // r1 x r2 x n3
  GradientBundle g;
  g.grad_U = scale * matricize(evw, 1).matrix * matricize(f.S, 1).matrix.transpose();
  g.grad_V = scale * matricize(euw, 2).matrix * matricize(f.S, 2).matrix.transpose();
  g.grad_W = scale * matricize(euv, 3).matrix * matricize(f.S, 3).matrix.transpose();
  g.grad_S = scale * mode_product(evw, f.U.transpose(), 1);
  return g;
}

/// Loss 1/2 ||(U,V,W).S - X_target||_F^2 and its gradients.
inline LossGradient factorization_loss_gradients(const FactorQuad& f, const Tensor3& target) {
  if (f.dims() != target.dims()) throw DimensionError("target dims do not match the factor quadruple");
  const Tensor3 e = reconstruct(f) - target;
  return {0.5 * e.squared_norm(), residual_gradients(f, e)};
}

inline GradientBundle factorization_gradients(const FactorQuad& f, const Tensor3& target) {
  return factorization_loss_gradients(f, target).grad;
}

/// Everything the driver needs about the problem being solved.
struct Objective {
  std::function<LossGradient(const FactorQuad&)> evaluate;
  /// Tensor being estimated, if known; enables rel_err and the tolerance stop.
  const Tensor3* truth = nullptr;
  /// Needed by the GD baseline.
  double sigma_max = 0;
};

/// Iterate `alg` from f0 until the stopping rule fires.
///
/// Iteration 0 records the initial point. wall_ms accumulates the time spent
/// in steps, projections and gradient evaluations after iteration 0; metric
/// evaluation against the truth is excluded.
inline Trajectory run_solver(const Objective& obj, const FactorQuad& f0, const SolverParams& params,
                             Algorithm alg) {
  params.validate();
  f0.validate();
  if (!f0.all_finite()) throw ContractError("initial factors are not finite");
  if (alg == Algorithm::kGD && !(obj.sigma_max > 0)) throw ParameterError("GD needs sigma_max > 0");

  using Clock = std::chrono::steady_clock;
  const double truth_norm = obj.truth ? obj.truth->norm() : 0.0;
  auto rel_err_of = [&](const FactorQuad& f) {
    if (!obj.truth) return std::numeric_limits<double>::quiet_NaN();
    const double d = (reconstruct(f) - *obj.truth).norm();
    return truth_norm > 0 ? d / truth_norm : d;
  };

  Trajectory traj;
  FactorQuad f = f0;
  LossGradient lg = obj.evaluate(f);
  const double loss0 = lg.loss;
  std::vector<double> losses{lg.loss};
  double elapsed_ms = 0;
  IterRecord rec0{0, lg.loss, rel_err_of(f), 0.0};
  traj.iterations.push_back(rec0);

  auto reached_tol = [&](const IterRecord& r, int t) {
    if (obj.truth) return r.rel_err <= params.rel_tol;
    if (r.loss == 0) return true;
    if (t < 5) return false;
    const double before = losses[static_cast<std::size_t>(t - 5)];
    return std::abs(before - r.loss) < params.rel_tol * std::max(before, std::numeric_limits<double>::min());
  };

  if (reached_tol(rec0, 0)) {
    traj.converged = true;
    traj.stop_reason = StopReason::kTol;
    traj.final = f;
    return traj;
  }

  for (int t = 1; t <= params.max_iters; ++t) {
    const auto start = Clock::now();
    f = alg == Algorithm::kScaledGD ? scaled_step(f, lg.grad, params.eta)
                                    : plain_step(f, lg.grad, params.eta, obj.sigma_max);
    if (params.use_projection) f = scaled_projection(f, *params.projection_B);
    const bool finite = f.all_finite();
    if (finite) lg = obj.evaluate(f);
    elapsed_ms += std::chrono::duration<double, std::milli>(Clock::now() - start).count();

    const bool diverged = !finite || !std::isfinite(lg.loss) || lg.loss > 1e6 * loss0;
    IterRecord rec{t, finite ? lg.loss : std::numeric_limits<double>::infinity(),
                   finite ? rel_err_of(f) : std::numeric_limits<double>::quiet_NaN(), elapsed_ms};
    losses.push_back(rec.loss);
    const bool done = diverged || reached_tol(rec, t) || t == params.max_iters;
    if (t % params.record_every == 0 || done) traj.iterations.push_back(rec);
    if (diverged) {
      traj.stop_reason = StopReason::kDiverged;
      break;
    }
    if (reached_tol(rec, t)) {
      traj.converged = true;
      traj.stop_reason = StopReason::kTol;
      break;
    }
  }
  traj.final = f;
  return traj;
}

/// ScaledGD or GD on 1/2 ||(U,V,W).S - X*||_F^2 with X* the ground truth.
inline Trajectory run_factorization(const GroundTruth& g, const FactorQuad& f0, const SolverParams& params,
                                    Algorithm alg = Algorithm::kScaledGD) {
  const Tensor3 target = g.tensor();
  Objective obj;
  obj.evaluate = [&](const FactorQuad& f) { return factorization_loss_gradients(f, target); };
  obj.truth = &target;
  obj.sigma_max = g.sigma.sigma_max;
  return run_solver(obj, f0, params, alg);
}

}  // namespace tuckergd
