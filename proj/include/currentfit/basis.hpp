#pragma once

#include "currentfit/spectral.hpp"

#include <span>
#include <string>
#include <vector>

namespace currentfit::bases {

using rkhs::CurrentRepr;
using rkhs::GridKernelContext;

enum class BasisKind { Kernel, Covariance, Mixed };

std::string to_string(BasisKind kind);
BasisKind basis_kind_from_string(const std::string& name);

/// Eigenpairs of the defining operator, restricted to the retained rank.
/// Fields are grid-sampled (N x 3) and orthonormal under the discretized L2
/// pairing.
struct OperatorSpectrum {
  VectorX eigenvalues;               // descending
  std::vector<FieldMatrix> fields;   // one per retained eigenvalue
  Index numerical_rank = 0;
};

/// One truncated basis of the RKHS together with everything the regression
/// link needs: the r grid-sampled elements, the fields coefficients are
/// paired against, and the r x r H_K Gram of the elements.
///
/// kind = Kernel:     elements rho_l = sqrt(lambda_l) psi_l, H_K-orthonormal.
/// kind = Covariance: elements v_l, L2-orthonormal eigenfields of the sample
///                    covariance operator (mean-centered).
/// kind = Mixed:      elements u_j = L_K^{1/2} w_j from the eigenpairs
///                    (eta_j, w_j) of G = L_K^{1/2} L_Gamma L_K^{1/2}.
struct BasisSet {
  BasisKind kind = BasisKind::Kernel;
  int r = 0;
  std::vector<FieldMatrix> elements;
  /// L2 duals for coefficient extraction: v_l (covariance) or
  /// L_K^{-1/2} w_j (mixed). Empty for the kernel kind, whose coefficients
  /// use the reproducing property on the representer coefficients.
  std::vector<FieldMatrix> coef_fields;
  MatrixX hk_gram;
  bool hk_gram_truncated = false;  // kernel spectrum tail mass exceeded 1%
  OperatorSpectrum spectrum;
  FieldMatrix sample_mean;  // zero field for the kernel kind
  std::uint64_t grid_hash = 0;
  Scalar lambda = 0.0;
  Scalar weight = 0.0;

  Index grid_size() const { return sample_mean.rows(); }
};

struct CoefficientVector {
  std::string label;
  BasisKind kind = BasisKind::Kernel;
  VectorX values;
};

/// Data-independent basis from the kernel operator spectrum (each scalar
/// eigenvalue lifts to a triplet over the canonical axes; tied eigenvalues
/// are enumerated by (eigenvalue desc, axis, scalar mode order)).
BasisSet kernel_basis(const GridKernelContext& ctx, int r);

/// Sample FPCA basis from the mean-centered empirical covariance operator,
/// computed in the n x n dual form.
BasisSet covariance_basis(std::span<const CurrentRepr> sample, const GridKernelContext& ctx, int r);

/// Simultaneous-diagonalization basis of the kernel and covariance
/// operators.
BasisSet mixed_basis(std::span<const CurrentRepr> sample, const GridKernelContext& ctx, int r);

/// Expansion coefficients of one current in a basis (mu, sigma-coefficients
/// or xi depending on the kind).
CoefficientVector coefficients(const CurrentRepr& current, const BasisSet& basis,
                               const GridKernelContext& ctx);

/// The r x r H_K Gram of the basis elements (exact identity for the kernel
/// kind, truncated spectral sum otherwise). Stored on the basis at build
/// time; this accessor re-derives it for cross-checks.
MatrixX basis_hk_gram(const BasisSet& basis, const GridKernelContext& ctx);

/// Grid values of sample_mean + sum over the first r_use coefficients.
FieldMatrix reconstruct(const BasisSet& basis, const VectorX& coefs, int r_use = -1);

/// Principal angles (radians, ascending) between the spans of two families
/// of grid fields under the discretized L2 geometry.
VectorX principal_angles(std::span<const FieldMatrix> a, std::span<const FieldMatrix> b, Scalar weight);

}  // namespace currentfit::bases
