#pragma once

// Dense order-3 tensors and the multilinear algebra used throughout.
//
// Storage is the column-major vectorization: entry (i1,i2,i3), 0-based,
// lives at flat index i1 + n1*(i2 + n2*i3). With this layout the mode
// matricizations follow
//
//   M1(X)(i1, i2 + n2*i3) = X(i1,i2,i3)     rows n1, cols n2*n3
//   M2(X)(i2, i1 + n1*i3) = X(i1,i2,i3)     rows n2, cols n1*n3
//   M3(X)(i3, i1 + n1*i2) = X(i1,i2,i3)     rows n3, cols n1*n2
//
// so that M1(X) = U M1(S) (W kron V)^T, M2(X) = V M2(S) (W kron U)^T and
// M3(X) = W M3(S) (V kron U)^T for X = (U,V,W).S. M1 is a pure reshape of
// the data buffer; M3 is the transpose of the (n1*n2) x n3 reshape.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <sstream>
#include <string>

#include "tuckergd/errors.hpp"

namespace tuckergd {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Dims = std::array<Index, 3>;

inline std::string to_string(const Dims& d) {
  std::ostringstream os;
  os << '(' << d[0] << ',' << d[1] << ',' << d[2] << ')';
  return os.str();
}

class Tensor3 {
 public:
  Tensor3() : dims_{0, 0, 0} {}

  explicit Tensor3(const Dims& dims) : dims_(dims) {
    check_dims(dims);
    data_ = VectorXd::Zero(dims[0] * dims[1] * dims[2]);
  }

  Tensor3(const Dims& dims, VectorXd data) : dims_(dims), data_(std::move(data)) {
    check_dims(dims);
    if (data_.size() != dims[0] * dims[1] * dims[2]) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match dims " + to_string(dims));
    }
  }

  static Tensor3 zeros(const Dims& dims) { return Tensor3(dims); }
  static Tensor3 constant(const Dims& dims, double v) {
    Tensor3 t(dims);
    t.data_.setConstant(v);
    return t;
  }

  const Dims& dims() const noexcept { return dims_; }
  Index dim(int k) const noexcept { return dims_[static_cast<std::size_t>(k)]; }
  Index size() const noexcept { return data_.size(); }

  double& operator()(Index i1, Index i2, Index i3) {
    return data_[i1 + dims_[0] * (i2 + dims_[1] * i3)];
  }
  double operator()(Index i1, Index i2, Index i3) const {
    return data_[i1 + dims_[0] * (i2 + dims_[1] * i3)];
  }

  /// Vectorization vc(X).
  const VectorXd& vec() const noexcept { return data_; }
  VectorXd& vec() noexcept { return data_; }

  std::span<const double> data() const noexcept { return {data_.data(), static_cast<std::size_t>(data_.size())}; }
  std::span<double> data() noexcept { return {data_.data(), static_cast<std::size_t>(data_.size())}; }

  double norm() const { return data_.norm(); }
  double squared_norm() const { return data_.squaredNorm(); }
  bool all_finite() const { return data_.allFinite(); }

  Tensor3& operator+=(const Tensor3& o) {
    require_same(o);
    data_ += o.data_;
    return *this;
  }
  Tensor3& operator-=(const Tensor3& o) {
    require_same(o);
    data_ -= o.data_;
    return *this;
  }
  Tensor3& operator*=(double s) {
    data_ *= s;
    return *this;
  }
  friend Tensor3 operator+(Tensor3 a, const Tensor3& b) { return a += b; }
  friend Tensor3 operator-(Tensor3 a, const Tensor3& b) { return a -= b; }
  friend Tensor3 operator*(double s, Tensor3 a) { return a *= s; }
  friend Tensor3 operator*(Tensor3 a, double s) { return a *= s; }

  bool operator==(const Tensor3& o) const {
    return dims_ == o.dims_ && data_ == o.data_;
  }

 private:
  static void check_dims(const Dims& d) {
    for (Index n : d) {
      if (n <= 0) throw DimensionError("tensor dims must be positive, got " + to_string(d));
    }
  }
  void require_same(const Tensor3& o) const {
    if (dims_ != o.dims_) {
      throw DimensionError("tensor dims differ: " + to_string(dims_) + " vs " + to_string(o.dims_));
    }
  }

  Dims dims_;
  VectorXd data_;
};

/// Mode-k unfolding. `mode` is 1-based as in the usual notation.
struct Matricization {
  int mode = 1;
  MatrixXd matrix;

  Index rows() const { return matrix.rows(); }
  Index cols() const { return matrix.cols(); }
};

namespace detail {

inline void check_mode(int mode) {
  if (mode < 1 || mode > 3) throw ParameterError("mode must be 1, 2 or 3, got " + std::to_string(mode));
}

inline Index other_product(const Dims& d, int mode) {
  Index p = 1;
  for (int k = 1; k <= 3; ++k) {
    if (k != mode) p *= d[static_cast<std::size_t>(k - 1)];
  }
  return p;
}

}  // namespace detail

inline Matricization matricize(const Tensor3& x, int mode) {
  detail::check_mode(mode);
  const auto [n1, n2, n3] = x.dims();
  const double* p = x.vec().data();
  Matricization m{mode, {}};
  switch (mode) {
    case 1:
      m.matrix = Eigen::Map<const MatrixXd>(p, n1, n2 * n3);
      break;
    case 2:
      m.matrix.resize(n2, n1 * n3);
      for (Index i3 = 0; i3 < n3; ++i3) {
        m.matrix.middleCols(i3 * n1, n1) =
            Eigen::Map<const MatrixXd>(p + i3 * n1 * n2, n1, n2).transpose();
      }
      break;
    default:
      m.matrix = Eigen::Map<const MatrixXd>(p, n1 * n2, n3).transpose();
      break;
  }
  return m;
}

/// Inverse of matricize. Throws DimensionError if the matrix shape is not
/// the mode-k unfolding shape of `dims`.
inline Tensor3 tensorize(const Matricization& m, const Dims& dims) {
  detail::check_mode(m.mode);
  const int k = m.mode;
  if (m.rows() != dims[static_cast<std::size_t>(k - 1)] || m.cols() != detail::other_product(dims, k)) {
    throw DimensionError("cannot tensorize a " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                         " mode-" + std::to_string(k) + " matricization into dims " + to_string(dims));
  }
  const auto [n1, n2, n3] = dims;
  Tensor3 x(dims);
  double* p = x.vec().data();
  switch (k) {
    case 1:
      Eigen::Map<MatrixXd>(p, n1, n2 * n3) = m.matrix;
      break;
    case 2:
      for (Index i3 = 0; i3 < n3; ++i3) {
        Eigen::Map<MatrixXd>(p + i3 * n1 * n2, n1, n2) = m.matrix.middleCols(i3 * n1, n1).transpose();
      }
      break;
    default:
      Eigen::Map<MatrixXd>(p, n1 * n2, n3) = m.matrix.transpose();
      break;
  }
  return x;
}

/// Mode-k product X x_k A, i.e. M_k(result) = A * M_k(X).
/// A must have dims[k] columns; the k-th dimension of the result is A.rows().
inline Tensor3 mode_product(const Tensor3& x, const MatrixXd& a, int mode) {
  detail::check_mode(mode);
  const auto [n1, n2, n3] = x.dims();
  const Index nk = x.dim(mode - 1);
  if (a.cols() != nk) {
    throw DimensionError("mode-" + std::to_string(mode) + " product: matrix has " + std::to_string(a.cols()) +
                         " columns, tensor dimension is " + std::to_string(nk));
  }
  const Index m = a.rows();
  const double* p = x.vec().data();
  switch (mode) {
    case 1: {
      Tensor3 y({m, n2, n3});
      Eigen::Map<MatrixXd>(y.vec().data(), m, n2 * n3).noalias() = a * Eigen::Map<const MatrixXd>(p, n1, n2 * n3);
      return y;
    }
    case 2: {
      Tensor3 y({n1, m, n3});
      for (Index i3 = 0; i3 < n3; ++i3) {
        Eigen::Map<MatrixXd>(y.vec().data() + i3 * n1 * m, n1, m).noalias() =
            Eigen::Map<const MatrixXd>(p + i3 * n1 * n2, n1, n2) * a.transpose();
      }
      return y;
    }
    default: {
      Tensor3 y({n1, n2, m});
      Eigen::Map<MatrixXd>(y.vec().data(), n1 * n2, m).noalias() =
          Eigen::Map<const MatrixXd>(p, n1 * n2, n3) * a.transpose();
      return y;
    }
  }
}

/// Kronecker product A kron B.
inline MatrixXd kron(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd k(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return k;
}

struct MultilinearOptions {
  /// Above this many columns (n2'*n3') the Kronecker route is never taken.
  Index kron_threshold = 0;
};

/// (A,B,C).S : the tensor with M1 = A M1(S) (C kron B)^T.
inline Tensor3 multilinear_multiply(const MatrixXd& a, const MatrixXd& b, const MatrixXd& c, const Tensor3& s,
                                    const MultilinearOptions& opts = {}) {
  if (a.cols() != s.dim(0) || b.cols() != s.dim(1) || c.cols() != s.dim(2)) {
    throw DimensionError("multilinear product: factor columns (" + std::to_string(a.cols()) + "," +
                         std::to_string(b.cols()) + "," + std::to_string(c.cols()) + ") do not match core dims " +
                         to_string(s.dims()));
  }
  const Index cols = b.rows() * c.rows();
  if (cols <= opts.kron_threshold) {
    Matricization m{1, a * matricize(s, 1).matrix * kron(c, b).transpose()};
    return tensorize(m, {a.rows(), b.rows(), c.rows()});
  }
  // Contract the mode with the largest shrink ratio first.
  std::array<int, 3> order{1, 2, 3};
  const std::array<const MatrixXd*, 3> f{&a, &b, &c};
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    const auto& fi = *f[static_cast<std::size_t>(i - 1)];
    const auto& fj = *f[static_cast<std::size_t>(j - 1)];
    return static_cast<double>(fi.rows()) / fi.cols() < static_cast<double>(fj.rows()) / fj.cols();
  });
  Tensor3 y = mode_product(s, *f[static_cast<std::size_t>(order[0] - 1)], order[0]);
  y = mode_product(y, *f[static_cast<std::size_t>(order[1] - 1)], order[1]);
  return mode_product(y, *f[static_cast<std::size_t>(order[2] - 1)], order[2]);
}

inline double inner(const Tensor3& x1, const Tensor3& x2) {
  if (x1.dims() != x2.dims()) {
    throw DimensionError("inner product: dims " + to_string(x1.dims()) + " vs " + to_string(x2.dims()));
  }
  return x1.vec().dot(x2.vec());
}

}  // namespace tuckergd
