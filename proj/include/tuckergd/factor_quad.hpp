#pragma once

#include <array>
#include <string>

#include "tuckergd/errors.hpp"
#include "tuckergd/tensor.hpp"

namespace tuckergd {

/// Tucker factors (U, V, W, S) representing (U, V, W).S.
/// No orthonormality is assumed.
struct FactorQuad {
  MatrixXd U;
  MatrixXd V;
  MatrixXd W;
  Tensor3 S;

  Dims dims() const { return {U.rows(), V.rows(), W.rows()}; }
  std::array<Index, 3> ranks() const { return S.dims(); }

  const MatrixXd& factor(int mode) const { return mode == 1 ? U : (mode == 2 ? V : W); }
  MatrixXd& factor(int mode) { return mode == 1 ? U : (mode == 2 ? V : W); }

  void validate() const {
    if (U.cols() != S.dim(0) || V.cols() != S.dim(1) || W.cols() != S.dim(2)) {
      throw DimensionError("factor columns (" + std::to_string(U.cols()) + "," + std::to_string(V.cols()) + "," +
                           std::to_string(W.cols()) + ") do not match core dims " + to_string(S.dims()));
    }
  }

  bool all_finite() const { return U.allFinite() && V.allFinite() && W.allFinite() && S.all_finite(); }
};

inline Tensor3 reconstruct(const FactorQuad& f) {
  f.validate();
  return multilinear_multiply(f.U, f.V, f.W, f.S);
}

}  // namespace tuckergd
