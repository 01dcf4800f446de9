#pragma once

// Reference computations used to check the library. They favour directness
// over speed: explicit Kronecker products, entry-by-entry loops, full
// materialization of the breve co-factors.

#include <cmath>
#include <functional>
#include <vector>

#include "tuckergd/tuckergd.hpp"

namespace oracle {

using namespace tuckergd;

/// kron computed entry by entry.
inline MatrixXd kron_explicit(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd k(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      for (Index p = 0; p < b.rows(); ++p)
        for (Index q = 0; q < b.cols(); ++q) k(i * b.rows() + p, j * b.cols() + q) = a(i, j) * b(p, q);
  return k;
}

/// vec((A,B,C).S) = (C kron B kron A) vec(S).
inline Tensor3 multilinear_kron(const MatrixXd& a, const MatrixXd& b, const MatrixXd& c, const Tensor3& s) {
  const MatrixXd k = kron_explicit(c, kron_explicit(b, a));
  return Tensor3({a.rows(), b.rows(), c.rows()}, k * s.vec());
}

/// Entry (i1,i2,i3) of (U,V,W).S by direct summation.
inline double entry(const FactorQuad& f, Index i1, Index i2, Index i3) {
  double v = 0;
  for (Index a = 0; a < f.S.dim(0); ++a)
    for (Index b = 0; b < f.S.dim(1); ++b)
      for (Index c = 0; c < f.S.dim(2); ++c) v += f.S(a, b, c) * f.U(i1, a) * f.V(i2, b) * f.W(i3, c);
  return v;
}

/// breve factors materialized: (W kron V) M1(S)^T, (W kron U) M2(S)^T, (V kron U) M3(S)^T.
inline MatrixXd breve(const FactorQuad& f, int mode) {
  switch (mode) {
    case 1: return kron_explicit(f.W, f.V) * matricize(f.S, 1).matrix.transpose();
    case 2: return kron_explicit(f.W, f.U) * matricize(f.S, 2).matrix.transpose();
    default: return kron_explicit(f.V, f.U) * matricize(f.S, 3).matrix.transpose();
  }
}

/// Gradients of <R, (U,V,W).S>-type losses from a dense residual tensor,
/// through the materialized breve factors and the explicit Kronecker map.
inline GradientBundle gradients_from_residual(const FactorQuad& f, const Tensor3& res, double scale) {
  GradientBundle g;
  g.grad_U = scale * matricize(res, 1).matrix * breve(f, 1);
  g.grad_V = scale * matricize(res, 2).matrix * breve(f, 2);
  g.grad_W = scale * matricize(res, 3).matrix * breve(f, 3);
  const MatrixXd k = kron_explicit(f.W, kron_explicit(f.V, f.U));
  g.grad_S = Tensor3(f.S.dims(), scale * (k.transpose() * res.vec()));
  return g;
}

/// Completion loss and gradients with a dense residual tensor that is zero
/// off the observed set.
inline LossGradient completion_dense(const FactorQuad& f, const ObservationSet& obs, double p) {
  const Tensor3 x = multilinear_kron(f.U, f.V, f.W, f.S);
  Tensor3 res(obs.dims);
  double sq = 0;
  for (std::size_t e = 0; e < obs.size(); ++e) {
    const auto [a, b, c] = obs.indices[e];
    const double r = x(a, b, c) - obs.values[e];
    res(a, b, c) = r;
    sq += r * r;
  }
  return {0.5 * sq / p, gradients_from_residual(f, res, 1.0 / p)};
}

inline double bundle_dot(const GradientBundle& g, const GradientBundle& d) {
  return (g.grad_U.array() * d.grad_U.array()).sum() + (g.grad_V.array() * d.grad_V.array()).sum() +
         (g.grad_W.array() * d.grad_W.array()).sum() + inner(g.grad_S, d.grad_S);
}

inline double bundle_norm(const GradientBundle& g) { return std::sqrt(bundle_dot(g, g)); }

inline double bundle_max_rel_diff(const GradientBundle& a, const GradientBundle& b) {
  const double scale = std::max(bundle_norm(a), bundle_norm(b));
  GradientBundle d{a.grad_U - b.grad_U, a.grad_V - b.grad_V, a.grad_W - b.grad_W, a.grad_S - b.grad_S};
  return scale > 0 ? bundle_norm(d) / scale : bundle_norm(d);
}

inline FactorQuad displaced(const FactorQuad& f, const GradientBundle& d, double h) {
  return {f.U + h * d.grad_U, f.V + h * d.grad_V, f.W + h * d.grad_W, f.S + h * d.grad_S};
}

/// Central-difference directional derivative of `loss` at f along d.
inline double directional_derivative(const std::function<double(const FactorQuad&)>& loss, const FactorQuad& f,
                                     const GradientBundle& d, double h = 1e-6) {
  return (loss(displaced(f, d, h)) - loss(displaced(f, d, -h))) / (2 * h);
}

inline GradientBundle random_direction(const FactorQuad& f, std::uint64_t seed) {
  return {CounterRng(seed, Stream::kAux, 1).normal_matrix(f.U.rows(), f.U.cols()),
          CounterRng(seed, Stream::kAux, 2).normal_matrix(f.V.rows(), f.V.cols()),
          CounterRng(seed, Stream::kAux, 3).normal_matrix(f.W.rows(), f.W.cols()),
          CounterRng(seed, Stream::kAux, 4).normal_tensor(f.S.dims())};
}

inline FactorQuad random_factors(const Dims& n, const Ranks& r, std::uint64_t seed) {
  return {CounterRng(seed, Stream::kAux, 11).normal_matrix(n[0], r[0]),
          CounterRng(seed, Stream::kAux, 12).normal_matrix(n[1], r[1]),
          CounterRng(seed, Stream::kAux, 13).normal_matrix(n[2], r[2]),
          CounterRng(seed, Stream::kAux, 14).normal_tensor({r[0], r[1], r[2]})};
}

/// Invertible r x r matrix with condition number at most about `cond`:
/// random orthogonal times a diagonal in [1, cond] times random orthogonal.
inline MatrixXd random_invertible(Index r, double cond, std::uint64_t seed) {
  const MatrixXd q1 = orthonormalize(CounterRng(seed, Stream::kAux, 21).normal_matrix(r, r));
  const MatrixXd q2 = orthonormalize(CounterRng(seed, Stream::kAux, 22).normal_matrix(r, r));
  VectorXd d(r);
  for (Index i = 0; i < r; ++i) d[i] = r == 1 ? 1.0 : 1.0 + (cond - 1.0) * static_cast<double>(i) / (r - 1);
  return q1 * d.asDiagonal() * q2;
}

/// Best-of-restarts higher-order orthogonal iteration. Returns the smallest
/// residual ||X - (U,V,W).(U^T,V^T,W^T).X||_F found.
inline double hooi_residual(const Tensor3& x, const Ranks& r, int restarts = 5, int max_sweeps = 500) {
  auto left = [](const MatrixXd& m, Index k) {
    Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeThinU);
    return MatrixXd(svd.matrixU().leftCols(k));
  };
  const double xx = x.squared_norm();
  double best = std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < restarts; ++restart) {
    MatrixXd u, v, w;
    if (restart == 0) {
      u = left(matricize(x, 1).matrix, r[0]);
      v = left(matricize(x, 2).matrix, r[1]);
      w = left(matricize(x, 3).matrix, r[2]);
    } else {
      const auto s = static_cast<std::uint64_t>(restart);
      u = orthonormalize(CounterRng(s, Stream::kAux, 31).normal_matrix(x.dim(0), r[0]));
      v = orthonormalize(CounterRng(s, Stream::kAux, 32).normal_matrix(x.dim(1), r[1]));
      w = orthonormalize(CounterRng(s, Stream::kAux, 33).normal_matrix(x.dim(2), r[2]));
    }
    double prev = -1;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
      u = left(matricize(mode_product(mode_product(x, v.transpose(), 2), w.transpose(), 3), 1).matrix, r[0]);
      v = left(matricize(mode_product(mode_product(x, u.transpose(), 1), w.transpose(), 3), 2).matrix, r[1]);
      w = left(matricize(mode_product(mode_product(x, u.transpose(), 1), v.transpose(), 2), 3).matrix, r[2]);
      const Tensor3 core = multilinear_multiply(u.transpose(), v.transpose(), w.transpose(), x);
      const double captured = core.squared_norm();
      if (std::abs(captured - prev) <= 1e-15 * xx) break;
      prev = captured;
    }
    const Tensor3 core = multilinear_multiply(u.transpose(), v.transpose(), w.transpose(), x);
    const double resid = (multilinear_multiply(u, v, w, core) - x).norm();
    best = std::min(best, resid);
  }
  return best;
}

/// F* moved along a random direction (each block scaled to the size of the
/// block it perturbs) until its scaled distance to F* is close to `target`.
inline FactorQuad perturb_to_distance(const GroundTruth& g, double target, std::uint64_t seed) {
  const GradientBundle d = random_direction(g.factors, seed);
  const FactorQuad& f = g.factors;
  GradientBundle unit{d.grad_U * (f.U.norm() / d.grad_U.norm()), d.grad_V * (f.V.norm() / d.grad_V.norm()),
                      d.grad_W * (f.W.norm() / d.grad_W.norm()), d.grad_S * (f.S.norm() / d.grad_S.norm())};
  double h = 0.01;
  for (int i = 0; i < 20; ++i) {
    const double dist = scaled_distance(displaced(f, unit, h), g).dist;
    if (std::abs(dist - target) <= 1e-3 * target) break;
    h *= target / dist;
  }
  return displaced(f, unit, h);
}

/// Log of the binomial tail probabilities P[X <= lo] and P[X >= hi] for
/// X ~ Bin(n, p), via the Chernoff bound exp(-n KL(a || p)).
inline double chernoff_two_sided(double n, double p, double lo_frac, double hi_frac) {
  auto kl = [](double a, double q) { return a * std::log(a / q) + (1 - a) * std::log((1 - a) / (1 - q)); };
  return std::exp(-n * kl(lo_frac, p)) + std::exp(-n * kl(hi_frac, p));
}

}  // namespace oracle
