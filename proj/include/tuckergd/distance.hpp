#pragma once

// Scaled distance between a factor quadruple and the ground truth:
//
//   dist^2 = inf_{Q_k invertible} sum_k ||(A_k Q_k - A*_k) Sigma_k||_F^2
//                                 + ||(Q1^-1, Q2^-1, Q3^-1).S - S*||_F^2
//
// where A_k runs over U, V, W. The infimum is approached by damped
// fixed-point sweeps on the stationarity conditions
//
//   A_k^T (A_k Q_k - A*_k) Sigma_k^2 = Q_k^-T M_k(S~ - S*) M_k(S~)^T,
//   S~ = (Q1^-1, Q2^-1, Q3^-1).S.
//
// The reported value is the objective at the returned aligners, so it is an
// upper bound on the true infimum; `residual` certifies stationarity.

#include <array>
#include <cmath>

#include "tuckergd/factor_quad.hpp"
#include "tuckergd/factors.hpp"
#include "tuckergd/tensor.hpp"

namespace tuckergd {

struct DistReport {
  double dist = 0;
  std::array<MatrixXd, 3> aligners;
  /// ||stationarity gradient||_F / sigma_max^2 at the returned aligners.
  double residual = 0;
  /// ||reconstruct(F) - X*||_F / ||X*||_F.
  double rel_fro = 0;
  /// residual reached the tolerance.
  bool converged = false;
  int sweeps = 0;
};

struct DistOptions {
  double tolerance = 1e-8;
  int max_sweeps = 200;
  double damping = 0.5;
};

namespace detail {

struct AlignmentProblem {
  const FactorQuad& f;
  const GroundTruth& g;
  std::array<MatrixXd, 3> sigma2;  // Sigma_k^2 as diagonal matrices

  AlignmentProblem(const FactorQuad& f_, const GroundTruth& g_) : f(f_), g(g_) {
    for (std::size_t k = 0; k < 3; ++k) sigma2[k] = g.mode_sigmas[k].array().square().matrix().asDiagonal();
  }

  Tensor3 aligned_core(const std::array<MatrixXd, 3>& q) const {
    return multilinear_multiply(q[0].partialPivLu().inverse(), q[1].partialPivLu().inverse(),
                                q[2].partialPivLu().inverse(), f.S);
  }

  double objective(const std::array<MatrixXd, 3>& q) const {
    double total = 0;
    for (int k = 1; k <= 3; ++k) {
      const auto ku = static_cast<std::size_t>(k - 1);
      total += ((f.factor(k) * q[ku] - g.factors.factor(k)) * g.mode_sigmas[ku].asDiagonal()).squaredNorm();
    }
    total += (aligned_core(q) - g.factors.S).squared_norm();
    return total;
  }

  /// Right-hand correction term Q_k^-T M_k(S~ - S*) M_k(S~)^T.
  MatrixXd core_term(const std::array<MatrixXd, 3>& q, const Tensor3& s_tilde, int k) const {
    const auto ku = static_cast<std::size_t>(k - 1);
    const MatrixXd ms = matricize(s_tilde, k).matrix;
    const MatrixXd md = ms - matricize(g.factors.S, k).matrix;
    return q[ku].transpose().partialPivLu().solve(md * ms.transpose());
  }

  double residual(const std::array<MatrixXd, 3>& q) const {
    const Tensor3 s_tilde = aligned_core(q);
    double sq = 0;
    for (int k = 1; k <= 3; ++k) {
      const auto ku = static_cast<std::size_t>(k - 1);
      const MatrixXd& a = f.factor(k);
      const MatrixXd grad =
          a.transpose() * (a * q[ku] - g.factors.factor(k)) * sigma2[ku] - core_term(q, s_tilde, k);
      sq += grad.squaredNorm();
    }
    const double smax = g.sigma.sigma_max;
    return std::sqrt(sq) / (smax * smax);
  }
};

}  // namespace detail

inline DistReport scaled_distance(const FactorQuad& f, const GroundTruth& g, const DistOptions& opts = {}) {
  f.validate();
  if (f.dims() != g.dims() || f.ranks() != g.ranks()) {
    throw DimensionError("factor quadruple shape does not match the ground truth");
  }
  if (!(g.sigma.sigma_min > 0)) throw ContractError("ground truth must have sigma_min > 0");

  detail::AlignmentProblem prob(f, g);
  std::array<MatrixXd, 3> q;
  std::array<Eigen::LDLT<MatrixXd>, 3> gram;
  for (int k = 1; k <= 3; ++k) {
    const auto ku = static_cast<std::size_t>(k - 1);
    const MatrixXd& a = f.factor(k);
    gram[ku].compute(a.transpose() * a);
    MatrixXd q0 = gram[ku].solve(a.transpose() * g.factors.factor(k));
    Eigen::FullPivLU<MatrixXd> lu(q0);
    if (!q0.allFinite() || lu.rank() < q0.rows()) q0 = MatrixXd::Identity(a.cols(), a.cols());
    q[ku] = q0;
  }

  double obj = prob.objective(q);
  double res = prob.residual(q);
  double damping = opts.damping;
  int sweep = 0;
  for (; sweep < opts.max_sweeps && res > opts.tolerance; ++sweep) {
    std::array<MatrixXd, 3> trial = q;
    for (int k = 1; k <= 3; ++k) {
      const auto ku = static_cast<std::size_t>(k - 1);
      const Tensor3 s_tilde = prob.aligned_core(trial);
      const MatrixXd rhs = f.factor(k).transpose() * g.factors.factor(k) * prob.sigma2[ku] +
                           prob.core_term(trial, s_tilde, k);
      const MatrixXd fixed =
          gram[ku].solve(rhs) * g.mode_sigmas[ku].array().square().inverse().matrix().asDiagonal();
      MatrixXd next = (1.0 - damping) * trial[ku] + damping * fixed;
      if (!next.allFinite() || Eigen::FullPivLU<MatrixXd>(next).rank() < next.rows()) continue;
      trial[ku] = std::move(next);
    }
    const double trial_obj = prob.objective(trial);
    if (!(trial_obj <= obj)) {
      damping *= 0.5;
      if (damping < 1.0 / 1024) break;
      continue;
    }
    q = std::move(trial);
    obj = trial_obj;
    res = prob.residual(q);
  }

  DistReport rep;
  rep.dist = std::sqrt(std::max(obj, 0.0));
  rep.aligners = q;
  rep.residual = res;
  rep.converged = res <= opts.tolerance;
  rep.sweeps = sweep;
  const Tensor3 truth = g.tensor();
  rep.rel_fro = (reconstruct(f) - truth).norm() / truth.norm();
  return rep;
}

}  // namespace tuckergd
