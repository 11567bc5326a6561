#pragma once

#include "currentfit/common.hpp"

#include <cmath>

namespace currentfit::rkhs {

/// Gaussian matrix-valued kernel K(x,y) = k(x,y) * I3 with scalar part
/// k(x,y) = exp(-|x-y|^2 / lambda^2). Everything vector-valued factors into
/// the scalar Gram times the 3x3 identity, so all assembly below is scalar.
struct KernelSpec {
  Scalar lambda = 1.0;

  bool operator==(const KernelSpec&) const = default;
};

inline void check_kernel(const KernelSpec& spec) {
  if (!(spec.lambda > 0.0)) throw ConfigError("kernel bandwidth lambda must be positive");
}

template <typename DerivedX, typename DerivedY>
Scalar kernel_value(const KernelSpec& spec, const Eigen::MatrixBase<DerivedX>& x,
                    const Eigen::MatrixBase<DerivedY>& y) {
  return std::exp(-(x - y).squaredNorm() / (spec.lambda * spec.lambda));
}

inline Eigen::Matrix3d kernel_eval(const KernelSpec& spec, const Vec3& x, const Vec3& y) {
  return kernel_value(spec, x, y) * Eigen::Matrix3d::Identity();
}

/// Scalar Gram of one point set. Exactly symmetric with a unit diagonal:
/// each unordered pair is evaluated once.
template <typename Derived>
MatrixX kernel_matrix(const KernelSpec& spec, const Eigen::MatrixBase<Derived>& points) {
  const Index n = points.rows();
  MatrixX gram(n, n);
  for (Index i = 0; i < n; ++i) {
    gram(i, i) = 1.0;
    for (Index j = i + 1; j < n; ++j) {
      const Scalar k = kernel_value(spec, points.row(i), points.row(j));
      gram(i, j) = k;
      gram(j, i) = k;
    }
  }
  return gram;
}

/// Rectangular kernel block k(a_i, b_j).
template <typename DerivedA, typename DerivedB>
MatrixX cross_kernel(const KernelSpec& spec, const Eigen::MatrixBase<DerivedA>& a,
                     const Eigen::MatrixBase<DerivedB>& b) {
  MatrixX block(a.rows(), b.rows());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.rows(); ++j) block(i, j) = kernel_value(spec, a.row(i), b.row(j));
  return block;
}

}  // namespace currentfit::rkhs
