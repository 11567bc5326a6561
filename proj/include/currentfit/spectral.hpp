#pragma once

#include "currentfit/current.hpp"

#include <memory>

namespace currentfit::rkhs {

/// Spectrum of the discretized scalar kernel operator M = weight * K_grid.
/// The vector-valued operator is M tensored with I3 (each eigenvalue has
/// multiplicity 3), so all spectral algebra happens on the scalar factor.
/// Eigenvalues below rel_threshold * lambda_max are discarded; inverse and
/// fractional powers act on the retained span only.
struct ScalarSpectrum {
  VectorX values;  // retained, descending
  MatrixX modes;   // N x m, Euclidean-orthonormal columns, sign-normalized
  Scalar weight = 0.0;
  Index full_size = 0;
  Scalar discarded_mass = 0.0;  // sum of dropped eigenvalues
  Scalar rel_threshold = 0.0;

  Index rank() const { return values.size(); }
};

/// Makes the largest-magnitude entry of each column positive (deterministic
/// eigenvector orientation across runs).
void normalize_column_signs(MatrixX& columns);

ScalarSpectrum kernel_operator_spectrum(const MatrixX& kernel_gram, Scalar weight,
                                        Scalar rel_threshold = 1e-12);

/// Coordinates of a grid field in the scalar eigenbasis, per axis: Q^T F.
MatrixX spectral_coords(const ScalarSpectrum& spectrum, const FieldMatrix& field);

/// Applies M^power to a grid field through the retained spectrum.
FieldMatrix apply_operator_power(const ScalarSpectrum& spectrum, const FieldMatrix& field, Scalar power);

/// H_K inner product of two grid-sampled fields through the kernel spectrum:
/// sum over retained modes of (1/lambda) <f, psi><g, psi> in discretized L2.
/// At full rank this equals the representer-coefficient pairing exactly.
Scalar hk_inner_fields(const ScalarSpectrum& spectrum, const FieldMatrix& f, const FieldMatrix& g);

/// Shared per-(grid, kernel) context: the scalar Gram and its spectrum.
struct GridKernelContext {
  std::shared_ptr<const Grid> grid;
  KernelSpec kernel;
  MatrixX kernel_gram;
  ScalarSpectrum spectrum;

  Index grid_size() const { return grid->size(); }
};

GridKernelContext make_context(std::shared_ptr<const Grid> grid, const KernelSpec& kernel,
                               Scalar rel_threshold = 1e-12);

}  // namespace currentfit::rkhs
