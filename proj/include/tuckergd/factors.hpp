#pragma once

// Operations on factor quadruples: preconditioner Grams, the scaled
// projection, incoherence and ground-truth generation.
//
// The breve co-factors
//
//   breve_U = (W kron V) M1(S)^T,  breve_V = (W kron U) M2(S)^T,
//   breve_W = (V kron U) M3(S)^T
//
// are tall ((n2 n3) x r1 etc.) and are never formed. Everything needed
// from them goes through their r x r Grams or through mode contractions.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "tuckergd/errors.hpp"
#include "tuckergd/factor_quad.hpp"
#include "tuckergd/hosvd.hpp"
#include "tuckergd/linalg.hpp"
#include "tuckergd/random.hpp"
#include "tuckergd/tensor.hpp"

namespace tuckergd {

struct PrecondState {
  MatrixXd gram_breve_U;
  MatrixXd gram_breve_V;
  MatrixXd gram_breve_W;
  MatrixXd gram_U;
  MatrixXd gram_V;
  MatrixXd gram_W;

  const MatrixXd& breve(int mode) const { return mode == 1 ? gram_breve_U : (mode == 2 ? gram_breve_V : gram_breve_W); }
  const MatrixXd& plain(int mode) const { return mode == 1 ? gram_U : (mode == 2 ? gram_V : gram_W); }
};

namespace detail {

inline MatrixXd symmetrized(const MatrixXd& g) { return 0.5 * (g + g.transpose()); }

}  // namespace detail

/// All six preconditioner Grams. Cost is O(r^4), independent of n.
inline PrecondState factor_grams(const FactorQuad& f) {
  f.validate();
  PrecondState p;
  p.gram_U = detail::symmetrized(f.U.transpose() * f.U);
  p.gram_V = detail::symmetrized(f.V.transpose() * f.V);
  p.gram_W = detail::symmetrized(f.W.transpose() * f.W);
  const Index r1 = f.S.dim(0), r2 = f.S.dim(1), r3 = f.S.dim(2);
  // M_k(S) (Gram kron Gram) M_k(S)^T = M_k(S) M_k(T)^T with T the core
  // multiplied by the other two Grams.
  const Tensor3 t1 = multilinear_multiply(MatrixXd::Identity(r1, r1), p.gram_V, p.gram_W, f.S);
  const Tensor3 t2 = multilinear_multiply(p.gram_U, MatrixXd::Identity(r2, r2), p.gram_W, f.S);
  const Tensor3 t3 = multilinear_multiply(p.gram_U, p.gram_V, MatrixXd::Identity(r3, r3), f.S);
  p.gram_breve_U = detail::symmetrized(matricize(f.S, 1).matrix * matricize(t1, 1).matrix.transpose());
  p.gram_breve_V = detail::symmetrized(matricize(f.S, 2).matrix * matricize(t2, 2).matrix.transpose());
  p.gram_breve_W = detail::symmetrized(matricize(f.S, 3).matrix * matricize(t3, 3).matrix.transpose());
  return p;
}

/// (U Q1, V Q2, W Q3, (Q1^-1, Q2^-1, Q3^-1).S); represents the same tensor.
inline FactorQuad reparameterize(const FactorQuad& f, const MatrixXd& q1, const MatrixXd& q2, const MatrixXd& q3) {
  FactorQuad g;
  g.U = f.U * q1;
  g.V = f.V * q2;
  g.W = f.W * q3;
  g.S = multilinear_multiply(q1.partialPivLu().inverse(), q2.partialPivLu().inverse(), q3.partialPivLu().inverse(),
                             f.S);
  return g;
}

/// Row l2 norms of U breve_U^T (mode 1), V breve_V^T, W breve_W^T, i.e. the
/// row norms of the mode-k matricization of (U,V,W).S.
inline VectorXd scaled_row_norms(const FactorQuad& f, const PrecondState& grams, int mode) {
  const MatrixXd& a = f.factor(mode);
  const MatrixXd ag = a * grams.breve(mode);
  return (ag.cwiseProduct(a)).rowwise().sum().cwiseMax(0.0).cwiseSqrt();
}

/// max_k sqrt(n_k) * || factor_k breve_k^T ||_{2,inf}.
inline double max_scaled_row_norm(const FactorQuad& f) {
  const PrecondState g = factor_grams(f);
  double m = 0;
  for (int k = 1; k <= 3; ++k) {
    const double nk = static_cast<double>(f.factor(k).rows());
    m = std::max(m, std::sqrt(nk) * scaled_row_norms(f, g, k).maxCoeff());
  }
  return m;
}

/// Row-wise shrinkage enforcing sqrt(n_k) ||factor_k breve_k^T||_{2,inf} <= B.
/// Row i of U is scaled by min(1, B / (sqrt(n1) ||U(i,:) breve_U^T||)), with
/// the Grams taken from the input; V and W likewise, S is unchanged.
inline FactorQuad scaled_projection(const FactorQuad& f, double radius) {
  if (!(radius > 0)) throw ParameterError("projection radius must be positive");
  const PrecondState g = factor_grams(f);
  FactorQuad out = f;
  for (int k = 1; k <= 3; ++k) {
    MatrixXd& a = out.factor(k);
    const double sqrt_n = std::sqrt(static_cast<double>(a.rows()));
    const VectorXd norms = scaled_row_norms(f, g, k);
    for (Index i = 0; i < a.rows(); ++i) {
      const double denom = sqrt_n * norms[i];
      if (denom > radius) a.row(i) *= radius / denom;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ground truth

enum class CoreStyle { kGaussian, kPrescribedKappa };

struct TruthStyle {
  CoreStyle core = CoreStyle::kGaussian;
  double kappa = 1.0;

  static TruthStyle gaussian() { return {CoreStyle::kGaussian, 1.0}; }
  static TruthStyle prescribed_kappa(double k) { return {CoreStyle::kPrescribedKappa, k}; }
};

struct GroundTruth {
  FactorQuad factors;
  SigmaReport sigma;
  double mu = 0;
  TruthStyle style;
  std::uint64_t seed = 0;
  /// Diagonal of Sigma_{*,k}: sqrt of diag(M_k(S) M_k(S)^T), aligned with the
  /// columns of the k-th factor.
  std::array<VectorXd, 3> mode_sigmas;
  /// Largest relative off-diagonal entry of M_k(S) M_k(S)^T over k.
  double canonical_residual = 0;
  /// canonical_residual exceeded 1e-10 after canonicalization.
  bool canonical_flag = false;

  Tensor3 tensor() const { return reconstruct(factors); }
  Dims dims() const { return factors.dims(); }
  Ranks ranks() const { return factors.ranks(); }
};

inline double incoherence(const MatrixXd& u, const MatrixXd& v, const MatrixXd& w) {
  double mu = 0;
  for (const MatrixXd* a : {&u, &v, &w}) {
    if (orthonormality_defect(*a) > 1e-10) throw ContractError("incoherence requires orthonormal factors");
    const double n = static_cast<double>(a->rows());
    const double r = static_cast<double>(a->cols());
    mu = std::max(mu, n / r * a->rowwise().squaredNorm().maxCoeff());
  }
  return mu;
}

inline double incoherence(const GroundTruth& g) { return incoherence(g.factors.U, g.factors.V, g.factors.W); }

namespace detail {

inline double core_offdiagonality(const Tensor3& s) {
  double worst = 0;
  for (int k = 1; k <= 3; ++k) {
    const MatrixXd m = matricize(s, k).matrix;
    MatrixXd g = m * m.transpose();
    const double scale = g.diagonal().cwiseAbs().maxCoeff();
    g.diagonal().setZero();
    if (scale > 0) worst = std::max(worst, g.cwiseAbs().maxCoeff() / scale);
  }
  return worst;
}

inline Tensor3 prescribed_kappa_core(Index r, double kappa) {
  Tensor3 s({r, r, r});
  const double inv_sqrt_r = 1.0 / std::sqrt(static_cast<double>(r));
  for (Index j1 = 1; j1 <= r; ++j1) {
    const double sigma = (r == 1) ? 1.0 : 1.0 - (1.0 - 1.0 / kappa) * static_cast<double>(j1 - 1) / static_cast<double>(r - 1);
    for (Index j2 = 1; j2 <= r; ++j2) {
      for (Index j3 = 1; j3 <= r; ++j3) {
        if ((j1 + j2 + j3) % r == 0) s(j1 - 1, j2 - 1, j3 - 1) = sigma * inv_sqrt_r;
      }
    }
  }
  return s;
}

}  // namespace detail

/// Random orthonormal factors (QR of seeded Gaussian matrices) with either an
/// i.i.d. N(0,1) core or the prescribed-condition-number core. Gaussian cores
/// are rotated (the factors absorb the rotations) so that every
/// M_k(S) M_k(S)^T is diagonal with decreasing entries.
inline GroundTruth make_ground_truth(const Dims& n, const Ranks& r, TruthStyle style, std::uint64_t seed) {
  check_ranks(n, r);
  GroundTruth g;
  g.style = style;
  g.seed = seed;
  FactorQuad& f = g.factors;
  f.U = orthonormalize(CounterRng(seed, Stream::kFactorU).normal_matrix(n[0], r[0]));
  f.V = orthonormalize(CounterRng(seed, Stream::kFactorV).normal_matrix(n[1], r[1]));
  f.W = orthonormalize(CounterRng(seed, Stream::kFactorW).normal_matrix(n[2], r[2]));

  if (style.core == CoreStyle::kPrescribedKappa) {
    if (r[0] != r[1] || r[1] != r[2]) throw ParameterError("prescribed-kappa core needs equal ranks");
    if (!(style.kappa >= 1.0)) throw ParameterError("kappa must be >= 1");
    if (r[0] == 1 && style.kappa != 1.0) throw ParameterError("rank 1 admits only kappa = 1");
    f.S = detail::prescribed_kappa_core(r[0], style.kappa);
  } else {
    f.S = CounterRng(seed, Stream::kCore).normal_tensor({r[0], r[1], r[2]});
    for (int pass = 0; pass < 3; ++pass) {
      for (int k = 1; k <= 3; ++k) {
        const MatrixXd m = matricize(f.S, k).matrix;
        const MatrixXd rot = top_eigenvectors(m * m.transpose(), m.rows());
        f.S = mode_product(f.S, rot.transpose(), k);
        f.factor(k) = f.factor(k) * rot;
      }
      if (detail::core_offdiagonality(f.S) <= 1e-12) break;
    }
  }
  g.canonical_residual = detail::core_offdiagonality(f.S);
  g.canonical_flag = g.canonical_residual > 1e-10;
  for (int k = 1; k <= 3; ++k) {
    const MatrixXd m = matricize(f.S, k).matrix;
    g.mode_sigmas[static_cast<std::size_t>(k - 1)] = (m * m.transpose()).diagonal().cwiseSqrt();
  }
  // Orthonormal factors leave the matricization spectra of the core intact.
  g.sigma = sigma_extremes(f.S, r);
  g.mu = incoherence(g);
  return g;
}

}  // namespace tuckergd
