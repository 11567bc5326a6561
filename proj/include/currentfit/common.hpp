#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace currentfit {

using Scalar = double;
using Index = Eigen::Index;

using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Grid- or triangle-sampled R^3 quantity: one sample per row.
using FieldMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, 3>;

/// Bad configuration (CLI exit 1).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or inconsistent input data (CLI exit 2).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure: singular system, non-convergence (CLI exit 3).
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// FNV-1a over a byte string.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Shortest text form that round-trips an IEEE double exactly.
std::string format_full(double value);

std::string hex64(std::uint64_t value);

/// Runs fn(i) for i in [0, count) on up to `jobs` threads. fn must only touch
/// its own slot of any shared output; iteration-to-slot mapping is fixed, so
/// results do not depend on the thread count.
void parallel_for(Index count, int jobs, const std::function<void(Index)>& fn);

inline int default_jobs() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

}  // namespace currentfit
