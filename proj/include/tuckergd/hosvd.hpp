#pragma once

#include <array>
#include <limits>
#include <string>
#include <utility>

#include "tuckergd/errors.hpp"
#include "tuckergd/factor_quad.hpp"
#include "tuckergd/linalg.hpp"
#include "tuckergd/tensor.hpp"

namespace tuckergd {

using Ranks = std::array<Index, 3>;

inline std::string to_string_ranks(const Ranks& r) { return to_string(Dims{r[0], r[1], r[2]}); }

inline void check_ranks(const Dims& n, const Ranks& r) {
  for (int k = 0; k < 3; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    if (r[ku] < 1 || r[ku] > n[ku] || r[ku] > detail::other_product(n, k + 1)) {
      throw RankError("multilinear rank " + to_string_ranks(r) + " is not admissible for dims " + to_string(n));
    }
  }
}

/// Truncated higher-order SVD: per-mode top-r_k left singular vectors of
/// M_k(X) and the projected core (U^T, V^T, W^T).X. Factors are orthonormal.
inline FactorQuad hosvd(const Tensor3& x, const Ranks& r) {
  check_ranks(x.dims(), r);
  FactorQuad f;
  f.U = top_left_singular_vectors(matricize(x, 1).matrix, r[0]);
  f.V = top_left_singular_vectors(matricize(x, 2).matrix, r[1]);
  f.W = top_left_singular_vectors(matricize(x, 3).matrix, r[2]);
  f.S = multilinear_multiply(f.U.transpose(), f.V.transpose(), f.W.transpose(), x);
  return f;
}

/// Extreme matricization singular values and the condition number.
struct SigmaReport {
  double sigma_max = 0;
  double sigma_min = 0;
  double kappa = 0;
  /// (sigma_1, sigma_{r_k}) of M_k(X) for k = 1, 2, 3.
  std::array<std::pair<double, double>, 3> per_mode{};
  /// sigma_{r_k} and sigma_{r_k + 1} coincide to within the rank tolerance.
  std::array<bool, 3> tie{};
};

inline SigmaReport sigma_extremes(const Tensor3& x, const Ranks& r) {
  check_ranks(x.dims(), r);
  SigmaReport rep;
  rep.sigma_min = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const VectorXd sv = singular_values(matricize(x, k + 1).matrix);
    const double s1 = sv[0];
    const double sr = sv[r[ku] - 1];
    if (!(sr > kRankTolerance * s1)) {
      throw DegenerateRankError(k + 1, "mode-" + std::to_string(k + 1) + " matricization has rank below " +
                                           std::to_string(r[ku]));
    }
    rep.per_mode[ku] = {s1, sr};
    rep.tie[ku] = r[ku] < sv.size() && (sr - sv[r[ku]]) <= kRankTolerance * s1;
    rep.sigma_max = std::max(rep.sigma_max, s1);
    rep.sigma_min = std::min(rep.sigma_min, sr);
  }
  rep.kappa = rep.sigma_max / rep.sigma_min;
  return rep;
}

}  // namespace tuckergd
