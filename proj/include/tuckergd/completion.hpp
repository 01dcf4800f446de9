#pragma once

// Tensor completion under the Bernoulli observation model.
//
// Loss: 1/(2p) || P_Omega((U,V,W).S) - Y ||_F^2, evaluated entry by entry.
//
// Observed entries are grouped by i1 (the storage order). For each row a the
// r2 x r3 slice L_a = (u_a, I, I).S is formed once; an entry (a,b,c) then
// costs O(r2 r3):
//   prediction   v_b^T L_a w_c
//   grad_V row b += R * L_a w_c
//   grad_W row c += R * L_a^T v_b
//   A_a          += R * v_b w_c^T
// and afterwards grad_U = A M1(S)^T, M1(grad_S) = U^T A with A the n1 x r2 r3
// matrix whose row a is vec(A_a).

#include <Eigen/Sparse>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tuckergd/errors.hpp"
#include "tuckergd/factor_quad.hpp"
#include "tuckergd/factors.hpp"
#include "tuckergd/hosvd.hpp"
#include "tuckergd/io.hpp"
#include "tuckergd/linalg.hpp"
#include "tuckergd/parallel.hpp"
#include "tuckergd/random.hpp"
#include "tuckergd/solver.hpp"
#include "tuckergd/tensor.hpp"

namespace tuckergd {

using Triple = std::array<std::uint32_t, 3>;

struct ObservationSet {
  Dims dims{0, 0, 0};
  /// 0-based, strictly increasing in lexicographic (i1, i2, i3) order.
  std::vector<Triple> indices;
  std::vector<double> values;
  double p = 1.0;

  std::size_t size() const { return indices.size(); }
  double total() const { return static_cast<double>(dims[0] * dims[1] * dims[2]); }
  double estimated_p() const { return static_cast<double>(indices.size()) / total(); }
  double squared_norm() const {
    double s = 0;
    for (double v : values) s += v * v;
    return s;
  }

  void validate() const {
    for (Index n : dims) {
      if (n <= 0) throw DimensionError("observation dims must be positive, got " + to_string(dims));
    }
    if (!(p > 0 && p <= 1)) throw ParameterError("sampling probability must lie in (0, 1]");
    if (indices.size() != values.size()) throw DimensionError("indices and values differ in length");
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const Triple& t = indices[i];
      for (std::size_t k = 0; k < 3; ++k) {
        if (static_cast<Index>(t[k]) >= dims[k]) throw DimensionError("observed index out of range");
      }
      if (i > 0 && !(indices[i - 1] < t)) throw ContractError("observed indices must be strictly sorted");
      if (!std::isfinite(values[i])) throw ContractError("observed values must be finite");
    }
  }
};

/// Each triple is kept independently with probability p. The draw for
/// triple (i1,i2,i3) uses the counter i1 + n1 (i2 + n2 i3).
inline std::vector<Triple> sample_mask(const Dims& dims, double p, std::uint64_t seed) {
  if (!(p > 0 && p <= 1)) throw ParameterError("sampling probability must lie in (0, 1]");
  const CounterRng rng(seed, Stream::kMask);
  const auto [n1, n2, n3] = dims;
  std::vector<Triple> out;
  out.reserve(static_cast<std::size_t>(p * static_cast<double>(n1 * n2 * n3) * 1.05) + 16);
  for (Index i1 = 0; i1 < n1; ++i1) {
    for (Index i2 = 0; i2 < n2; ++i2) {
      for (Index i3 = 0; i3 < n3; ++i3) {
        const auto counter = static_cast<std::uint64_t>(i1 + n1 * (i2 + n2 * i3));
        if (rng.uniform(counter) < p) {
          out.push_back({static_cast<std::uint32_t>(i1), static_cast<std::uint32_t>(i2), static_cast<std::uint32_t>(i3)});
        }
      }
    }
  }
  return out;
}

/// Noise standard deviation for a target SNR in dB:
/// SNR = 10 log10(||X||_F^2 / (N sigma_w^2)) with N the number of entries.
inline double snr_to_sigma(double squared_norm, double entries, double snr_db) {
  return std::sqrt(squared_norm / (entries * std::pow(10.0, snr_db / 10.0)));
}

/// Values of X at the mask plus i.i.d. N(0, noise_sigma^2). The noise draw
/// for a triple uses the same flat counter as the mask.
inline ObservationSet observe(const Tensor3& x, std::vector<Triple> mask, double p, double noise_sigma = 0.0,
                              std::uint64_t noise_seed = 0) {
  if (!(noise_sigma >= 0)) throw ParameterError("noise_sigma must be >= 0");
  ObservationSet obs;
  obs.dims = x.dims();
  obs.p = p;
  obs.indices = std::move(mask);
  obs.values.resize(obs.indices.size());
  const CounterRng rng(noise_seed, Stream::kNoise);
  const Index n1 = x.dim(0), n2 = x.dim(1);
  for (std::size_t i = 0; i < obs.indices.size(); ++i) {
    const auto [a, b, c] = obs.indices[i];
    double v = x(a, b, c);
    if (noise_sigma > 0) v += noise_sigma * rng.normal(static_cast<std::uint64_t>(a + n1 * (b + n2 * c)));
    obs.values[i] = v;
  }
  obs.validate();
  return obs;
}

/// Per-row index over an ObservationSet plus the sparse evaluation kernels.
class CompletionKernel {
 public:
  explicit CompletionKernel(const ObservationSet& obs) : obs_(obs) {
    obs.validate();
    row_ptr_.assign(static_cast<std::size_t>(obs.dims[0] + 1), 0);
    for (const Triple& t : obs.indices) ++row_ptr_[t[0] + 1];
    for (std::size_t a = 0; a + 1 < row_ptr_.size(); ++a) row_ptr_[a + 1] += row_ptr_[a];
  }

  const ObservationSet& observations() const { return obs_; }

  /// <S, u_{i1} (x) v_{i2} (x) w_{i3}> - y for every observed entry.
  std::vector<double> residual(const FactorQuad& f) const {
    check(f);
    std::vector<double> out(obs_.size());
    const Prepared prep(f);
    parallel_chunks(kChunks, [&](int c) {
      const auto [begin, end] = chunk_range(obs_.dims[0], kChunks, c);
      MatrixXd l(prep.r2, prep.r3);
      for (long a = begin; a < end; ++a) {
        prep.slice(a, l);
        for (std::size_t e = row_ptr_[a]; e < row_ptr_[a + 1]; ++e) {
          const auto& t = obs_.indices[e];
          out[e] = prep.vt.col(t[1]).dot(l * prep.wt.col(t[2])) - obs_.values[e];
        }
      }
    });
    return out;
  }

  /// 1/(2p) sum R^2 and its gradients, using probability p.
  LossGradient loss_gradients(const FactorQuad& f, double p) const {
    check(f);
    if (!(p > 0)) throw ParameterError("sampling probability must be positive");
    const Prepared prep(f);
    const Index n1 = obs_.dims[0], n2 = obs_.dims[1], n3 = obs_.dims[2];
    const Index r2 = prep.r2, r3 = prep.r3;
    MatrixXd amat(r2 * r3, n1);  // column a is vec(A_a)
    std::vector<MatrixXd> gvt(kChunks), gwt(kChunks);
    std::vector<double> loss(kChunks, 0.0);
    parallel_chunks(kChunks, [&](int c) {
      const auto cu = static_cast<std::size_t>(c);
      gvt[cu] = MatrixXd::Zero(r2, n2);
      gwt[cu] = MatrixXd::Zero(r3, n3);
      const auto [begin, end] = chunk_range(n1, kChunks, c);
      MatrixXd l(r2, r3), acc(r2, r3);
      VectorXd lw(r2), ltv(r3);
      double sq = 0;
      for (long a = begin; a < end; ++a) {
        prep.slice(a, l);
        acc.setZero();
        for (std::size_t e = row_ptr_[a]; e < row_ptr_[a + 1]; ++e) {
          const auto& t = obs_.indices[e];
          const auto vb = prep.vt.col(t[1]);
          const auto wc = prep.wt.col(t[2]);
          lw.noalias() = l * wc;
          const double res = vb.dot(lw) - obs_.values[e];
          sq += res * res;
          ltv.noalias() = l.transpose() * vb;
          gvt[cu].col(t[1]) += res * lw;
          gwt[cu].col(t[2]) += res * ltv;
          acc.noalias() += res * vb * wc.transpose();
        }
        amat.col(a) = Eigen::Map<const VectorXd>(acc.data(), r2 * r3);
      }
      loss[cu] = sq;
    });
    const double inv_p = 1.0 / p;
    LossGradient out;
    MatrixXd gv = MatrixXd::Zero(r2, n2), gw = MatrixXd::Zero(r3, n3);
    double sq = 0;
    for (std::size_t c = 0; c < static_cast<std::size_t>(kChunks); ++c) {
      gv += gvt[c];
      gw += gwt[c];
      sq += loss[c];
    }
    out.loss = 0.5 * inv_p * sq;
    out.grad.grad_U = inv_p * amat.transpose() * prep.m1s.transpose();
    out.grad.grad_V = inv_p * gv.transpose();
    out.grad.grad_W = inv_p * gw.transpose();
    out.grad.grad_S = tensorize({1, inv_p * f.U.transpose() * amat.transpose()}, f.S.dims());
    return out;
  }

  /// sum_Omega y * u_{i1} (x) v_{i2} (x) w_{i3} = (U^T, V^T, W^T).P_Omega(Y).
  Tensor3 project_core(const MatrixXd& u, const MatrixXd& v, const MatrixXd& w) const {
    const Index r2 = v.cols(), r3 = w.cols();
    const MatrixXd vt = v.transpose(), wt = w.transpose();
    MatrixXd amat(r2 * r3, obs_.dims[0]);
    parallel_chunks(kChunks, [&](int c) {
      const auto [begin, end] = chunk_range(obs_.dims[0], kChunks, c);
      MatrixXd acc(r2, r3);
      for (long a = begin; a < end; ++a) {
        acc.setZero();
        for (std::size_t e = row_ptr_[a]; e < row_ptr_[a + 1]; ++e) {
          const auto& t = obs_.indices[e];
          acc.noalias() += obs_.values[e] * vt.col(t[1]) * wt.col(t[2]).transpose();
        }
        amat.col(a) = Eigen::Map<const VectorXd>(acc.data(), r2 * r3);
      }
    });
    return tensorize({1, u.transpose() * amat.transpose()}, {u.cols(), r2, r3});
  }

 private:
  static constexpr int kChunks = 32;

  struct Prepared {
    Index r1, r2, r3;
    MatrixXd ut, vt, wt;  // transposed factors, one column per row index
    MatrixXd m1s;         // M1(S), r1 x r2 r3
    explicit Prepared(const FactorQuad& f)
        : r1(f.S.dim(0)), r2(f.S.dim(1)), r3(f.S.dim(2)), ut(f.U.transpose()), vt(f.V.transpose()),
          wt(f.W.transpose()), m1s(matricize(f.S, 1).matrix) {}
    /// L_a = (u_a, I, I).S as an r2 x r3 matrix.
    void slice(long a, MatrixXd& l) const {
      Eigen::Map<VectorXd>(l.data(), r2 * r3).noalias() = m1s.transpose() * ut.col(a);
    }
  };

  void check(const FactorQuad& f) const {
    f.validate();
    if (f.dims() != obs_.dims) {
      throw DimensionError("factor dims " + to_string(f.dims()) + " do not match observation dims " +
                           to_string(obs_.dims));
    }
  }

  const ObservationSet& obs_;
  std::vector<std::size_t> row_ptr_;
};

inline std::vector<double> sparse_residual(const FactorQuad& f, const ObservationSet& obs) {
  return CompletionKernel(obs).residual(f);
}

inline GradientBundle completion_gradients(const FactorQuad& f, const ObservationSet& obs) {
  return CompletionKernel(obs).loss_gradients(f, obs.p).grad;
}

inline double completion_loss(const FactorQuad& f, const ObservationSet& obs) {
  double sq = 0;
  for (double r : sparse_residual(f, obs)) sq += r * r;
  return 0.5 * sq / obs.p;
}

// ---------------------------------------------------------------------------
// Initialization

enum class InitKind { kSpectral, kRandom, kProvided };

inline InitKind parse_init(const std::string& s) {
  if (s == "spectral") return InitKind::kSpectral;
  if (s == "random") return InitKind::kRandom;
  throw ParameterError("unknown init '" + s + "' (expected spectral or random)");
}

inline std::string to_string(InitKind k) {
  return k == InitKind::kSpectral ? "spectral" : (k == InitKind::kRandom ? "random" : "provided");
}

namespace detail {

/// Sparse mode-k matricization of the observations.
inline Eigen::SparseMatrix<double> sparse_matricize(const ObservationSet& obs, int mode) {
  const auto [n1, n2, n3] = obs.dims;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(obs.size());
  for (std::size_t e = 0; e < obs.size(); ++e) {
    const auto [a, b, c] = obs.indices[e];
    const Index i1 = a, i2 = b, i3 = c;
    switch (mode) {
      case 1: trips.emplace_back(i1, i2 + n2 * i3, obs.values[e]); break;
      case 2: trips.emplace_back(i2, i1 + n1 * i3, obs.values[e]); break;
      default: trips.emplace_back(i3, i1 + n1 * i2, obs.values[e]); break;
    }
  }
  const Index rows = obs.dims[static_cast<std::size_t>(mode - 1)];
  Eigen::SparseMatrix<double> m(rows, detail::other_product(obs.dims, mode));
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

}  // namespace detail

/// Spectral initialization: for each mode the top-r_k eigenvectors of the
/// diagonal-deleted Gram p^-2 M_k(Y) M_k(Y)^T, then the core
/// p^-1 (U^T, V^T, W^T).Y, then the scaled projection if a radius is given.
inline FactorQuad spectral_init_completion(const ObservationSet& obs, const Ranks& r, double p,
                                           std::optional<double> radius = std::nullopt) {
  check_ranks(obs.dims, r);
  if (!(p > 0 && p <= 1)) throw ParameterError("sampling probability must lie in (0, 1]");
  FactorQuad f;
  for (int k = 1; k <= 3; ++k) {
    const Eigen::SparseMatrix<double> m = detail::sparse_matricize(obs, k);
    const Eigen::SparseMatrix<double> mt = m.transpose();
    MatrixXd gram = MatrixXd(m * mt) / (p * p);
    gram.diagonal().setZero();
    try {
      f.factor(k) = top_eigenvectors(gram, r[static_cast<std::size_t>(k - 1)]);
    } catch (const Error& e) {
      throw Error(std::string("spectral initialization failed: ") + e.what());
    }
  }
  f.S = CompletionKernel(obs).project_core(f.U, f.V, f.W) * (1.0 / p);
  if (radius) f = scaled_projection(f, *radius);
  return f;
}

/// U0, V0, W0 with i.i.d. N(0, 1/n_k) entries and S0 with i.i.d.
/// N(0, ||Y||_F^2 / (p r1 r2 r3)) entries.
inline FactorQuad random_init_completion(const ObservationSet& obs, const Ranks& r, double p, std::uint64_t seed) {
  check_ranks(obs.dims, r);
  FactorQuad f;
  f.U = CounterRng(seed, Stream::kInitU).normal_matrix(obs.dims[0], r[0], 1.0 / std::sqrt(double(obs.dims[0])));
  f.V = CounterRng(seed, Stream::kInitV).normal_matrix(obs.dims[1], r[1], 1.0 / std::sqrt(double(obs.dims[1])));
  f.W = CounterRng(seed, Stream::kInitW).normal_matrix(obs.dims[2], r[2], 1.0 / std::sqrt(double(obs.dims[2])));
  const double var = obs.squared_norm() / (p * static_cast<double>(r[0] * r[1] * r[2]));
  f.S = CounterRng(seed, Stream::kInitCore).normal_tensor({r[0], r[1], r[2]}, std::sqrt(var));
  return f;
}

// ---------------------------------------------------------------------------
// Solvers

struct CompletionParams : SolverParams {
  /// Use obs.p (the generative probability) or |Omega| / (n1 n2 n3).
  bool estimate_p = false;
  InitKind init = InitKind::kSpectral;
  std::optional<FactorQuad> provided;
  std::uint64_t init_seed = 0;

  double effective_p(const ObservationSet& obs) const { return estimate_p ? obs.estimated_p() : obs.p; }
};

inline FactorQuad completion_initial_point(const ObservationSet& obs, const Ranks& r, const CompletionParams& params) {
  const double p = params.effective_p(obs);
  switch (params.init) {
    case InitKind::kSpectral:
      return spectral_init_completion(obs, r, p,
                                      params.use_projection ? params.projection_B : std::optional<double>{});
    case InitKind::kRandom:
      return random_init_completion(obs, r, p, params.init_seed);
    default:
      if (!params.provided) throw ParameterError("init = provided but no factors were given");
      if (params.provided->dims() != obs.dims || params.provided->ranks() != r) {
        throw DimensionError("provided initial factors do not match the problem shape");
      }
      return *params.provided;
  }
}

namespace detail {

inline Trajectory solve_completion_impl(const ObservationSet& obs, const Ranks& r, const CompletionParams& params,
                                        const Tensor3* truth, Algorithm alg, double sigma_max) {
  params.validate();
  obs.validate();
  if (truth && truth->dims() != obs.dims) throw DimensionError("truth dims do not match observation dims");
  const CompletionKernel kernel(obs);
  const double p = params.effective_p(obs);
  const FactorQuad f0 = completion_initial_point(obs, r, params);
  Objective objective;
  objective.evaluate = [&](const FactorQuad& f) { return kernel.loss_gradients(f, p); };
  objective.truth = truth;
  objective.sigma_max = sigma_max;
  return run_solver(objective, f0, params, alg);
}

}  // namespace detail

/// Spectral or random initialization followed by scaled (projected) gradient steps.
inline Trajectory solve_completion(const ObservationSet& obs, const Ranks& r, const CompletionParams& params,
                                   const Tensor3* truth = nullptr) {
  return detail::solve_completion_impl(obs, r, params, truth, Algorithm::kScaledGD, 0.0);
}

/// Plain GD baseline with factor step eta / sigma_max(X*)^2.
inline Trajectory solve_completion_gd(const ObservationSet& obs, const Ranks& r, const CompletionParams& params,
                                      const GroundTruth& truth) {
  const Tensor3 x = truth.tensor();
  return detail::solve_completion_impl(obs, r, params, &x, Algorithm::kGD, truth.sigma.sigma_max);
}

// ---------------------------------------------------------------------------
// OBS1 files

namespace io {

inline void write_obs1(std::ostream& os, const ObservationSet& obs) {
  obs.validate();
  write_magic(os, "OBS1");
  write_u8(os, 1);
  for (Index n : obs.dims) write_uint<std::uint32_t>(os, static_cast<std::uint32_t>(n));
  write_f64(os, obs.p);
  write_uint<std::uint64_t>(os, obs.size());
  for (std::size_t e = 0; e < obs.size(); ++e) {
    for (std::uint32_t i : obs.indices[e]) write_uint<std::uint32_t>(os, i);
    write_f64(os, obs.values[e]);
  }
}

inline ObservationSet read_obs1(std::istream& is) {
  expect_magic(is, "OBS1");
  if (read_u8(is) != 1) throw FormatError("unsupported OBS1 version");
  ObservationSet obs;
  for (auto& n : obs.dims) n = read_uint<std::uint32_t>(is);
  obs.p = read_f64(is);
  const auto count = read_uint<std::uint64_t>(is);
  if (count > static_cast<std::uint64_t>(obs.total())) throw FormatError("OBS1 count exceeds the number of entries");
  obs.indices.resize(count);
  obs.values.resize(count);
  for (std::uint64_t e = 0; e < count; ++e) {
    for (auto& i : obs.indices[e]) i = read_uint<std::uint32_t>(is);
    obs.values[e] = read_f64(is);
  }
  try {
    obs.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("invalid OBS1 contents: ") + e.what());
  }
  return obs;
}

}  // namespace io

}  // namespace tuckergd
