#pragma once

// Tensor regression y_i = <A_i, X*> with a Gaussian design.
//
// A_i has i.i.d. N(0, 1/m) entries in vectorization order. Entry j of A_i is
// normal number j of the counter stream (seed, design tag, i), so every pass
// regenerates exactly the same tensors and nothing of size m * n1 n2 n3 is
// ever stored unless a cache is requested explicitly.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include "tuckergd/errors.hpp"
#include "tuckergd/factor_quad.hpp"
#include "tuckergd/factors.hpp"
#include "tuckergd/hosvd.hpp"
#include "tuckergd/linalg.hpp"
#include "tuckergd/parallel.hpp"
#include "tuckergd/random.hpp"
#include "tuckergd/solver.hpp"
#include "tuckergd/tensor.hpp"

namespace tuckergd {

/// What the solvers need from a linear measurement map.
template <class Op>
concept MeasurementOperator = requires(const Op& op, const Tensor3& x, const VectorXd& y) {
  { op.dims() } -> std::convertible_to<Dims>;
  { op.size() } -> std::convertible_to<Index>;
  { op.forward(x) } -> std::convertible_to<VectorXd>;
  { op.adjoint(y) } -> std::convertible_to<Tensor3>;
};

class GaussianDesign {
 public:
  static constexpr Index kDefaultBlock = 4096;

  GaussianDesign(Index m, const Dims& dims, std::uint64_t seed, Index block = kDefaultBlock)
      : m_(m), dims_(dims), seed_(seed), block_(block) {
    if (m < 1) throw ParameterError("measurement count must be >= 1");
    for (Index n : dims) {
      if (n <= 0) throw DimensionError("design dims must be positive, got " + to_string(dims));
    }
    if (block < 2) throw ParameterError("design block size must be >= 2");
  }

  Index size() const { return m_; }
  const Dims& dims() const { return dims_; }
  std::uint64_t seed() const { return seed_; }
  Index entries() const { return dims_[0] * dims_[1] * dims_[2]; }
  double scale() const { return 1.0 / std::sqrt(static_cast<double>(m_)); }

  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  /// Keeps every A_i in memory (row i of an m x n1 n2 n3 matrix) when that
  /// takes at most max_bytes. The stored values are the regenerated ones, so
  /// results match the streaming path up to summation order. Returns whether
  /// the cache is active.
  bool cache(std::size_t max_bytes) {
    const double bytes = static_cast<double>(m_) * static_cast<double>(entries()) * sizeof(double);
    if (bytes > static_cast<double>(max_bytes)) return false;
    if (cache_) return true;
    auto c = std::make_shared<RowMatrix>(m_, entries());
    parallel_chunks(kChunks, [&](int ch) {
      const auto [begin, end] = chunk_range(m_, kChunks, ch);
      for (Index i = begin; i < end; ++i) fill(i, 0, entries(), c->row(i).data());
    });
    cache_ = std::move(c);
    return true;
  }
  bool cached() const { return static_cast<bool>(cache_); }
  void drop_cache() { cache_.reset(); }

  /// Entries [j0, j0 + len) of A_i.
  void fill(Index i, Index j0, Index len, double* out) const {
    CounterRng(seed_, Stream::kDesign, static_cast<std::uint64_t>(i))
        .fill_normal(out, static_cast<std::uint64_t>(len), static_cast<std::uint64_t>(j0));
    const double s = scale();
    for (Index k = 0; k < len; ++k) out[k] *= s;
  }

  /// The full measurement tensor A_i.
  Tensor3 measurement(Index i) const {
    check_index(i);
    Tensor3 a(dims_);
    fill(i, 0, entries(), a.vec().data());
    return a;
  }

  /// y_i = <A_i, X>.
  VectorXd forward(const Tensor3& x) const { return forward_batch({x}).col(0); }

  /// Column t holds the measurements of xs[t]; one pass over the design.
  MatrixXd forward_batch(const std::vector<Tensor3>& xs) const {
    for (const Tensor3& x : xs) require_dims(x);
    const Index t = static_cast<Index>(xs.size());
    MatrixXd out(m_, t);
    const Index n = entries();
    if (cache_) {
      MatrixXd xm(n, t);
      for (Index k = 0; k < t; ++k) xm.col(k) = xs[static_cast<std::size_t>(k)].vec();
      parallel_chunks(kChunks, [&](int c) {
        const auto [begin, end] = chunk_range(m_, kChunks, c);
        out.middleRows(begin, end - begin).noalias() = cache_->middleRows(begin, end - begin) * xm;
      });
      return out;
    }
    parallel_chunks(kChunks, [&](int c) {
      const auto [begin, end] = chunk_range(m_, kChunks, c);
      VectorXd buf(std::min(block_, n));
      for (Index i = begin; i < end; ++i) {
        VectorXd acc = VectorXd::Zero(t);
        for (Index j0 = 0; j0 < n; j0 += block_) {
          const Index len = std::min(block_, n - j0);
          fill(i, j0, len, buf.data());
          for (Index k = 0; k < t; ++k) {
            acc[k] += buf.head(len).dot(xs[static_cast<std::size_t>(k)].vec().segment(j0, len));
          }
        }
        out.row(i) = acc.transpose();
      }
    });
    return out;
  }

  /// sum_i y_i A_i.
  Tensor3 adjoint(const VectorXd& y) const {
    if (y.size() != m_) {
      throw DimensionError("adjoint needs " + std::to_string(m_) + " values, got " + std::to_string(y.size()));
    }
    const Index n = entries();
    std::vector<VectorXd> partial(kChunks);
    parallel_chunks(kChunks, [&](int c) {
      const auto [begin, end] = chunk_range(m_, kChunks, c);
      VectorXd& acc = partial[static_cast<std::size_t>(c)];
      if (cache_) {
        acc.noalias() = cache_->middleRows(begin, end - begin).transpose() * y.segment(begin, end - begin);
        return;
      }
      acc = VectorXd::Zero(n);
      VectorXd buf(std::min(block_, n));
      for (Index i = begin; i < end; ++i) {
        if (y[i] == 0) continue;
        for (Index j0 = 0; j0 < n; j0 += block_) {
          const Index len = std::min(block_, n - j0);
          fill(i, j0, len, buf.data());
          acc.segment(j0, len) += y[i] * buf.head(len);
        }
      }
    });
    return Tensor3(dims_, merge(partial, n));
  }

  struct ResidualAdjoint {
    double loss = 0;
    Tensor3 e;
  };

  /// r = A(X) - y, returning 1/2 ||r||^2 and A*(r). A_i is generated once
  /// when it fits in a block, otherwise twice.
  ResidualAdjoint residual_adjoint(const Tensor3& x, const VectorXd& y) const {
    require_dims(x);
    if (y.size() != m_) throw DimensionError("measurement vector length does not match the design");
    const Index n = entries();
    std::vector<VectorXd> partial(kChunks);
    std::vector<double> sq(kChunks, 0.0);
    parallel_chunks(kChunks, [&](int c) {
      const auto cu = static_cast<std::size_t>(c);
      const auto [begin, end] = chunk_range(m_, kChunks, c);
      VectorXd& acc = partial[cu];
      if (cache_) {
        const auto rows = cache_->middleRows(begin, end - begin);
        const VectorXd r = rows * x.vec() - y.segment(begin, end - begin);
        acc.noalias() = rows.transpose() * r;
        sq[cu] = r.squaredNorm();
        return;
      }
      acc = VectorXd::Zero(n);
      VectorXd buf(std::min(block_, n));
      for (Index i = begin; i < end; ++i) {
        double r = -y[i];
        if (n <= block_) {
          fill(i, 0, n, buf.data());
          r += buf.dot(x.vec());
          acc += r * buf;
        } else {
          for (Index j0 = 0; j0 < n; j0 += block_) {
            const Index len = std::min(block_, n - j0);
            fill(i, j0, len, buf.data());
            r += buf.head(len).dot(x.vec().segment(j0, len));
          }
          for (Index j0 = 0; j0 < n; j0 += block_) {
            const Index len = std::min(block_, n - j0);
            fill(i, j0, len, buf.data());
            acc.segment(j0, len) += r * buf.head(len);
          }
        }
        sq[cu] += r * r;
      }
    });
    double total = 0;
    for (double s : sq) total += s;
    return {0.5 * total, Tensor3(dims_, merge(partial, n))};
  }

 private:
  static constexpr int kChunks = 32;

  static VectorXd merge(const std::vector<VectorXd>& partial, Index n) {
    VectorXd out = VectorXd::Zero(n);
    for (const VectorXd& p : partial) out += p;
    return out;
  }

  void check_index(Index i) const {
    if (i < 0 || i >= m_) throw ParameterError("measurement index out of range");
  }
  void require_dims(const Tensor3& x) const {
    if (x.dims() != dims_) {
      throw DimensionError("tensor dims " + to_string(x.dims()) + " do not match design dims " + to_string(dims_));
    }
  }

  Index m_;
  Dims dims_;
  std::uint64_t seed_;
  Index block_;
  std::shared_ptr<const RowMatrix> cache_;
};

/// A(X) = vec(X), A*(y) = tensorize(y). Turns regression into factorization.
class IdentityOperator {
 public:
  explicit IdentityOperator(const Dims& dims) : dims_(dims) {}
  const Dims& dims() const { return dims_; }
  Index size() const { return dims_[0] * dims_[1] * dims_[2]; }
  VectorXd forward(const Tensor3& x) const {
    if (x.dims() != dims_) throw DimensionError("tensor dims do not match the operator");
    return x.vec();
  }
  Tensor3 adjoint(const VectorXd& y) const { return Tensor3(dims_, y); }

 private:
  Dims dims_;
};

static_assert(MeasurementOperator<GaussianDesign>);
static_assert(MeasurementOperator<IdentityOperator>);

/// Loss 1/2 ||A((U,V,W).S) - y||^2 and its gradients, with the dense tensor
/// E = A*(A(X) - y) as residual.
template <MeasurementOperator Op>
LossGradient regression_loss_gradients(const FactorQuad& f, const Op& op, const VectorXd& y) {
  if (f.dims() != op.dims()) throw DimensionError("factor dims do not match the measurement operator");
  const Tensor3 x = reconstruct(f);
  if constexpr (requires { op.residual_adjoint(x, y); }) {
    auto ra = op.residual_adjoint(x, y);
    return {ra.loss, residual_gradients(f, ra.e)};
  } else {
    const VectorXd r = op.forward(x) - y;
    return {0.5 * r.squaredNorm(), residual_gradients(f, op.adjoint(r))};
  }
}

template <MeasurementOperator Op>
GradientBundle regression_gradients(const FactorQuad& f, const Op& op, const VectorXd& y) {
  return regression_loss_gradients(f, op, y).grad;
}

struct RegressionInit {
  FactorQuad factors;
  /// y = 0: the core is zero and no step can be taken from this point.
  bool degenerate = false;
  /// Fewer measurements than the degrees of freedom of a rank-r tensor.
  bool low_information = false;
};

inline double tucker_degrees_of_freedom(const Dims& n, const Ranks& r) {
  double dof = static_cast<double>(r[0] * r[1] * r[2]);
  for (std::size_t k = 0; k < 3; ++k) dof += static_cast<double>(n[k] * r[k] - r[k] * r[k]);
  return dof;
}

/// HOSVD_r(A*(y)).
template <MeasurementOperator Op>
RegressionInit spectral_init_regression(const Op& op, const VectorXd& y, const Ranks& r) {
  check_ranks(op.dims(), r);
  if (y.size() != op.size()) throw DimensionError("measurement vector length does not match the operator");
  RegressionInit init;
  init.factors = hosvd(op.adjoint(y), r);
  init.degenerate = y.squaredNorm() == 0;
  init.low_information = static_cast<double>(op.size()) < tucker_degrees_of_freedom(op.dims(), r);
  return init;
}

template <MeasurementOperator Op>
Trajectory solve_regression(const Op& op, const VectorXd& y, const Ranks& r, const SolverParams& params,
                            const Tensor3* truth = nullptr, Algorithm alg = Algorithm::kScaledGD,
                            double sigma_max = 0.0, const FactorQuad* f0 = nullptr) {
  params.validate();
  if (params.use_projection) throw ParameterError("regression has no projection step");
  if (truth && truth->dims() != op.dims()) throw DimensionError("truth dims do not match the operator");
  const FactorQuad start = f0 ? *f0 : spectral_init_regression(op, y, r).factors;
  Objective objective;
  objective.evaluate = [&](const FactorQuad& f) { return regression_loss_gradients(f, op, y); };
  objective.truth = truth;
  objective.sigma_max = sigma_max;
  return run_solver(objective, start, params, alg);
}

template <MeasurementOperator Op>
Trajectory solve_regression_gd(const Op& op, const VectorXd& y, const Ranks& r, const SolverParams& params,
                               const GroundTruth& truth) {
  const Tensor3 x = truth.tensor();
  return solve_regression(op, y, r, params, &x, Algorithm::kGD, truth.sigma.sigma_max);
}

// ---------------------------------------------------------------------------
// Restricted isometry probe

struct TripEstimate {
  double delta_hat = 0;
  int trials = 0;
  Ranks r{0, 0, 0};
  double worst_ratio_low = 0;
  double worst_ratio_high = 0;
};

/// Unit-norm rank-r tensor number `trial`: orthonormal factors from QR of
/// Gaussians and a Gaussian core.
inline Tensor3 random_low_rank_unit(const Dims& n, const Ranks& r, std::uint64_t seed, int trial) {
  const auto sub = static_cast<std::uint64_t>(trial) * 4;
  FactorQuad f;
  f.U = orthonormalize(CounterRng(seed, Stream::kTrip, sub).normal_matrix(n[0], r[0]));
  f.V = orthonormalize(CounterRng(seed, Stream::kTrip, sub + 1).normal_matrix(n[1], r[1]));
  f.W = orthonormalize(CounterRng(seed, Stream::kTrip, sub + 2).normal_matrix(n[2], r[2]));
  f.S = CounterRng(seed, Stream::kTrip, sub + 3).normal_tensor({r[0], r[1], r[2]});
  Tensor3 x = reconstruct(f);
  return x * (1.0 / x.norm());
}

/// Largest observed |‖A(X)‖^2 / ‖X‖^2 - 1| over random rank-r tensors.
template <MeasurementOperator Op>
TripEstimate trip_probe(const Op& op, const Ranks& r, int trials, std::uint64_t seed) {
  if (trials < 1) throw ParameterError("trials must be >= 1");
  check_ranks(op.dims(), r);
  std::vector<Tensor3> xs;
  xs.reserve(static_cast<std::size_t>(trials));
  for (int t = 0; t < trials; ++t) xs.push_back(random_low_rank_unit(op.dims(), r, seed, t));
  VectorXd ratios(trials);
  if constexpr (requires { op.forward_batch(xs); }) {
    const MatrixXd ys = op.forward_batch(xs);
    ratios = ys.colwise().squaredNorm().transpose();
  } else {
    for (int t = 0; t < trials; ++t) ratios[t] = op.forward(xs[static_cast<std::size_t>(t)]).squaredNorm();
  }
  for (int t = 0; t < trials; ++t) ratios[t] /= xs[static_cast<std::size_t>(t)].squared_norm();
  TripEstimate est;
  est.trials = trials;
  est.r = r;
  est.worst_ratio_low = ratios.minCoeff();
  est.worst_ratio_high = ratios.maxCoeff();
  est.delta_hat = std::max(std::abs(est.worst_ratio_low - 1.0), std::abs(est.worst_ratio_high - 1.0));
  return est;
}

}  // namespace tuckergd
