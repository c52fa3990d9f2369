#ifndef DYNBPS_RNG_HPP
#define DYNBPS_RNG_HPP

#include <cstdint>
#include <random>

#include "dynbps/common.hpp"

namespace dynbps {

/// Task families that own disjoint random streams.
enum class StreamKind : std::uint64_t {
  Generic = 0,
  Generator = 1,
  Backward = 2,
  Forecast = 3,
  Interpolation = 4,
  Replicate = 5,
  Grid = 6,
  Sigma = 7,
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// A seeded random stream. Streams are keyed by (seed, kind, index) so that a
/// task's draws never depend on which thread runs it or in what order.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(detail::splitmix64(seed)) {}

  static RandomStream keyed(std::uint64_t seed, StreamKind kind,
                            std::uint64_t index) {
    std::uint64_t key = detail::splitmix64(seed);
    key = detail::splitmix64(key ^ static_cast<std::uint64_t>(kind));
    key = detail::splitmix64(key ^ (index + 0x632be59bd9b4e019ULL));
    return RandomStream(key);
  }

  double normal() { return normal_(engine_); }

  double uniform() { return uniform_(engine_); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double chi_squared(double dof) {
    std::gamma_distribution<double> gamma(0.5 * dof, 2.0);
    return gamma(engine_);
  }

  /// Draws an index from the categorical distribution `probs` (need not be
  /// normalized; must be nonnegative with positive sum).
  template <typename Derived>
  Index categorical(const Eigen::MatrixBase<Derived>& probs) {
    const double total = probs.sum();
    const double u = uniform() * total;
    double acc = 0.0;
    Index last_positive = 0;
    for (Index j = 0; j < probs.size(); ++j) {
      if (probs(j) <= 0.0) continue;
      acc += probs(j);
      last_positive = j;
      if (u < acc) return j;
    }
    return last_positive;
  }

  template <typename Scalar = double>
  Mat<Scalar> standard_normal(Index rows, Index cols) {
    Mat<Scalar> z(rows, cols);
    for (Index c = 0; c < cols; ++c)
      for (Index r = 0; r < rows; ++r) z(r, c) = static_cast<Scalar>(normal());
    return z;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace dynbps

#endif  // DYNBPS_RNG_HPP
