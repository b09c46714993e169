#pragma once

#include <cstdint>

#include "ddc/linalg.hpp"

namespace ddc {

/// Counter-based generator: the k-th draw of stream `s` under seed `seed` is a
/// pure function of (seed, s, k), so results do not depend on call order or on
/// the platform's standard-library engines.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))) {}

  static constexpr std::uint64_t mix(std::uint64_t z) {
    // SplitMix64 finalizer.
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t bits_at(std::uint64_t counter) const { return mix(key_ + mix(counter)); }

  /// Uniform on the open interval (0, 1).
  double open01_at(std::uint64_t counter) const {
    return (static_cast<double>(bits_at(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  double next_open01() { return open01_at(counter_++); }
  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_open01(); }

  Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
    Matrix m(rows, cols);
    // Row-major fill keeps the draw order independent of storage order.
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = next_uniform(lo, hi);
    }
    return m;
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace ddc
