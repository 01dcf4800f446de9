#pragma once

// Small dense linear-algebra helpers on top of Eigen.

#include <Eigen/Dense>

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "tuckergd/errors.hpp"
#include "tuckergd/tensor.hpp"

namespace tuckergd {

/// Relative cutoff under which a singular value counts as zero.
inline constexpr double kRankTolerance = 1e-12;

/// Flip each column so its largest-magnitude entry is positive.
inline void fix_signs(MatrixXd& vecs) {
  for (Index j = 0; j < vecs.cols(); ++j) {
    Index imax = 0;
    vecs.col(j).cwiseAbs().maxCoeff(&imax);
    if (vecs(imax, j) < 0) vecs.col(j) *= -1.0;
  }
}

/// Eigenvectors of the r largest (algebraic) eigenvalues of a symmetric matrix,
/// ordered by decreasing eigenvalue, sign-normalized.
inline MatrixXd top_eigenvectors(const MatrixXd& sym, Index r, VectorXd* values = nullptr) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw Error("symmetric eigensolver failed");
  const Index n = sym.rows();
  // Eigen sorts ascending; take from the back.
  MatrixXd out(n, r);
  if (values) values->resize(r);
  for (Index j = 0; j < r; ++j) {
    out.col(j) = es.eigenvectors().col(n - 1 - j);
    if (values) (*values)[j] = es.eigenvalues()[n - 1 - j];
  }
  fix_signs(out);
  return out;
}

/// Top-r left singular vectors of M.
///
/// When M is wide (rows much smaller than cols) the eigenvectors of the
/// rows x rows Gram M M^T are used instead of a full SVD.
inline MatrixXd top_left_singular_vectors(const MatrixXd& m, Index r) {
  if (r > m.rows() || r > m.cols()) {
    throw RankError("requested " + std::to_string(r) + " singular vectors of a " + std::to_string(m.rows()) + "x" +
                    std::to_string(m.cols()) + " matrix");
  }
  if (4 * m.rows() <= m.cols()) {
    MatrixXd gram = m * m.transpose();
    return top_eigenvectors(gram, r);
  }
  Eigen::BDCSVD<MatrixXd> svd(m, Eigen::ComputeThinU);
  MatrixXd u = svd.matrixU().leftCols(r);
  fix_signs(u);
  return u;
}

/// All singular values of M in decreasing order.
inline VectorXd singular_values(const MatrixXd& m) {
  if (m.rows() <= m.cols()) {
    // Thin QR of M^T first keeps the SVD square.
    Eigen::HouseholderQR<MatrixXd> qr(m.transpose());
    MatrixXd rfac = qr.matrixQR().topRows(m.rows()).triangularView<Eigen::Upper>();
    return Eigen::JacobiSVD<MatrixXd>(rfac).singularValues();
  }
  Eigen::HouseholderQR<MatrixXd> qr(m);
  MatrixXd rfac = qr.matrixQR().topRows(m.cols()).triangularView<Eigen::Upper>();
  return Eigen::JacobiSVD<MatrixXd>(rfac).singularValues();
}

/// Cholesky of a symmetric positive-definite Gram with one jitter retry.
///
/// If the first factorization fails, 1e-12 * trace / r is added to the
/// diagonal once. A second failure throws IllConditionedError tagged with
/// `mode`.
class SpdFactor {
 public:
  SpdFactor(const MatrixXd& gram, int mode) {
    llt_.compute(gram);
    if (llt_.info() == Eigen::Success && llt_.matrixLLT().diagonal().minCoeff() > 0) return;
    const double trace = gram.trace();
    const double jitter = 1e-12 * trace / static_cast<double>(gram.rows());
    if (!(jitter > 0)) throw IllConditionedError(mode, "preconditioner Gram " + std::to_string(mode) + " is zero");
    MatrixXd g = gram;
    g.diagonal().array() += jitter;
    llt_.compute(g);
    if (llt_.info() != Eigen::Success || !(llt_.matrixLLT().diagonal().minCoeff() > 0)) {
      throw IllConditionedError(mode, "preconditioner Gram " + std::to_string(mode) + " is singular");
    }
  }

  /// G^{-1} B.
  MatrixXd solve(const MatrixXd& b) const { return llt_.solve(b); }
  /// B G^{-1} for symmetric G.
  MatrixXd solve_right(const MatrixXd& b) const { return llt_.solve(b.transpose()).transpose(); }

 private:
  Eigen::LLT<MatrixXd> llt_;
};

/// Orthonormal basis of the column space of a tall matrix via Householder QR.
inline MatrixXd orthonormalize(const MatrixXd& a) {
  Eigen::HouseholderQR<MatrixXd> qr(a);
  return qr.householderQ() * MatrixXd::Identity(a.rows(), a.cols());
}

inline double orthonormality_defect(const MatrixXd& u) {
  return (u.transpose() * u - MatrixXd::Identity(u.cols(), u.cols())).cwiseAbs().maxCoeff();
}

}  // namespace tuckergd
