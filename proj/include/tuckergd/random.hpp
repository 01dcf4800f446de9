#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (seed, stream tag, counter), so independent components (factors, core,
// mask, noise, measurement tensors) can be regenerated in any order.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

#include "tuckergd/tensor.hpp"

namespace tuckergd {

/// Purpose tags for the streams derived from one seed.
enum class Stream : std::uint64_t {
  kFactorU = 1,
  kFactorV = 2,
  kFactorW = 3,
  kCore = 4,
  kMask = 5,
  kNoise = 6,
  kDesign = 7,
  kInitU = 8,
  kInitV = 9,
  kInitW = 10,
  kInitCore = 11,
  kTrip = 12,
  kPerturb = 13,
  kAux = 14,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class CounterRng {
 public:
  constexpr CounterRng(std::uint64_t seed, Stream stream, std::uint64_t substream = 0) noexcept
      : key_(splitmix64(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(stream)) ^ substream)) {}

  constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
    return splitmix64(key_ ^ splitmix64(counter));
  }

  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform(std::uint64_t counter) const noexcept {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Two independent standard normals from pair index `c` (Box-Muller).
  std::pair<double, double> normal_pair(std::uint64_t c) const noexcept {
    const double u1 = uniform(2 * c);
    const double u2 = uniform(2 * c + 1);
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    return {rad * std::cos(ang), rad * std::sin(ang)};
  }

  /// Standard normal number `i` of this stream.
  double normal(std::uint64_t i) const noexcept {
    const auto [a, b] = normal_pair(i / 2);
    return (i % 2 == 0) ? a : b;
  }

  /// Fill `out` with standard normals i0, i0+1, ...
  void fill_normal(double* out, std::uint64_t count, std::uint64_t i0 = 0) const noexcept {
    std::uint64_t i = i0;
    std::uint64_t k = 0;
    if (i % 2 == 1 && k < count) {
      out[k++] = normal_pair(i / 2).second;
      ++i;
    }
    for (; k + 1 < count; k += 2, i += 2) {
      const auto [a, b] = normal_pair(i / 2);
      out[k] = a;
      out[k + 1] = b;
    }
    if (k < count) out[k] = normal_pair(i / 2).first;
  }

  MatrixXd normal_matrix(Index rows, Index cols, double scale = 1.0) const {
    MatrixXd m(rows, cols);
    fill_normal(m.data(), static_cast<std::uint64_t>(m.size()));
    if (scale != 1.0) m *= scale;
    return m;
  }

  Tensor3 normal_tensor(const Dims& dims, double scale = 1.0) const {
    Tensor3 t(dims);
    fill_normal(t.vec().data(), static_cast<std::uint64_t>(t.size()));
    if (scale != 1.0) t *= scale;
    return t;
  }

 private:
  std::uint64_t key_;
};

}  // namespace tuckergd
