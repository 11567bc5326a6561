#pragma once

#include "currentfit/common.hpp"

#include <cmath>
#include <cstdint>

namespace currentfit {

// Splittable counter-based generator (SplitMix64 core). All sampling in the
// project goes through this so that a run is reproduced exactly by its master
// seed, independent of platform library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  /// Derives an independent stream, e.g. one per subject: the k-th stream of
  /// seed s is Rng(mix(s, k)).
  static std::uint64_t substream(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    return mix(z);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Marsaglia polar rejection.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  /// Samples an index from unnormalized non-negative weights.
  int categorical(const VectorX& weights) {
    const double total = weights.sum();
    double u = uniform() * total;
    for (Index i = 0; i < weights.size(); ++i) {
      u -= weights[i];
      if (u <= 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size() - 1);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace currentfit
