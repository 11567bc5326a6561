#include "currentfit/spectral.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace currentfit::rkhs {

void normalize_column_signs(MatrixX& columns) {
  for (Index j = 0; j < columns.cols(); ++j) {
    Index at = 0;
    columns.col(j).cwiseAbs().maxCoeff(&at);
    if (columns(at, j) < 0.0) columns.col(j) = -columns.col(j);
  }
}

ScalarSpectrum kernel_operator_spectrum(const MatrixX& kernel_gram, Scalar weight, Scalar rel_threshold) {
  if (!(weight > 0.0)) throw ConfigError("quadrature weight must be positive");
  Eigen::SelfAdjointEigenSolver<MatrixX> solver(weight * kernel_gram);
  if (solver.info() != Eigen::Success) throw NumericalError("kernel operator eigendecomposition failed");

  const Index n = kernel_gram.rows();
  const VectorX ascending = solver.eigenvalues();
  const Scalar cutoff = rel_threshold * std::max<Scalar>(ascending[n - 1], 0.0);

  Index kept = 0;
  Scalar discarded = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (ascending[i] > cutoff)
      ++kept;
    else
      discarded += std::max<Scalar>(ascending[i], 0.0);
  }
  if (kept == 0) throw NumericalError("kernel operator has no eigenvalue above the rank threshold");

  ScalarSpectrum spectrum;
  spectrum.values.resize(kept);
  spectrum.modes.resize(n, kept);
  for (Index i = 0; i < kept; ++i) {
    spectrum.values[i] = ascending[n - 1 - i];
    spectrum.modes.col(i) = solver.eigenvectors().col(n - 1 - i);
  }
  normalize_column_signs(spectrum.modes);
  spectrum.weight = weight;
  spectrum.full_size = n;
  spectrum.discarded_mass = discarded;
  spectrum.rel_threshold = rel_threshold;
  return spectrum;
}

MatrixX spectral_coords(const ScalarSpectrum& spectrum, const FieldMatrix& field) {
  if (field.rows() != spectrum.full_size) throw DataError("field shape does not match the spectrum grid");
  return spectrum.modes.transpose() * field;
}

FieldMatrix apply_operator_power(const ScalarSpectrum& spectrum, const FieldMatrix& field, Scalar power) {
  const MatrixX coords = spectral_coords(spectrum, field);
  const VectorX scale = spectrum.values.array().pow(power);
  return spectrum.modes * (scale.asDiagonal() * coords);
}

Scalar hk_inner_fields(const ScalarSpectrum& spectrum, const FieldMatrix& f, const FieldMatrix& g) {
  const MatrixX cf = spectral_coords(spectrum, f);
  const MatrixX cg = spectral_coords(spectrum, g);
  const VectorX inv = spectrum.weight * spectrum.values.cwiseInverse();
  return (cf.cwiseProduct(inv.asDiagonal() * cg)).sum();
}

GridKernelContext make_context(std::shared_ptr<const Grid> grid, const KernelSpec& kernel,
                               Scalar rel_threshold) {
  check_kernel(kernel);
  GridKernelContext ctx;
  ctx.kernel = kernel;
  ctx.kernel_gram = kernel_matrix(kernel, grid->points);
  ctx.spectrum = kernel_operator_spectrum(ctx.kernel_gram, grid->weight, rel_threshold);
  ctx.grid = std::move(grid);
  return ctx;
}

}  // namespace currentfit::rkhs
