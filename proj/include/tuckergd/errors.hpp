#pragma once

#include <stdexcept>
#include <string>

namespace tuckergd {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of the operands do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Requested multilinear rank exceeds what the tensor dimensions allow.
class RankError : public Error {
 public:
  using Error::Error;
};

/// A scalar parameter is out of its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Input violates a documented precondition (e.g. non-orthonormal factors).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A matricization has fewer than r_k singular values above the cutoff.
class DegenerateRankError : public Error {
 public:
  DegenerateRankError(int mode, const std::string& what)
      : Error(what), mode_(mode) {}
  int mode() const noexcept { return mode_; }

 private:
  int mode_;
};

/// A preconditioner Gram is numerically singular, even after jitter.
class IllConditionedError : public Error {
 public:
  IllConditionedError(int mode, const std::string& what)
      : Error(what), mode_(mode) {}
  /// 1..3 for the breve Grams, 4..6 for U^T U, V^T V, W^T W.
  int mode() const noexcept { return mode_; }

 private:
  int mode_;
};

}  // namespace tuckergd
