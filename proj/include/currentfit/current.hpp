#pragma once

#include "currentfit/grid.hpp"
#include "currentfit/kernel.hpp"
#include "currentfit/mesh.hpp"

#include <memory>
#include <string>

namespace currentfit::rkhs {

/// Discrete current of a surface: the atom list sum_j K(x_j, .)(tau_j) with
/// x_j the triangle centers and tau_j the area vectors.
struct RawCurrent {
  FieldMatrix points;
  FieldMatrix vectors;
  KernelSpec kernel;
  std::string label;

  Index size() const { return points.rows(); }
};

/// Grid-anchored smooth representative phi_bar = sum_i K(a_i, .)(beta_i),
/// chosen so that phi_bar best matches the raw current on the grid.
struct CurrentRepr {
  std::shared_ptr<const Grid> grid;
  FieldMatrix beta;  // N x 3 coefficients
  KernelSpec kernel;
  std::string label;
  Scalar residual = 0.0;  // max_i |phi_bar(a_i) - phi(a_i)|, diagnostic
  Scalar ridge = 0.0;     // regularization used by the projection solve
};

RawCurrent current_from_mesh(const geom::DescriptorSet& descriptors, const KernelSpec& kernel,
                             const std::string& label = "");

/// Evaluates sum_j k(x_j, y) tau_j at each query row.
FieldMatrix evaluate(const RawCurrent& current, const FieldMatrix& at);
Vec3 evaluate_at(const RawCurrent& current, const Vec3& y);

/// Same expansion for a grid-anchored representative.
FieldMatrix evaluate(const CurrentRepr& repr, const FieldMatrix& at);
Vec3 evaluate_at(const CurrentRepr& repr, const Vec3& y);

/// Grid-point evaluations K_grid * beta.
FieldMatrix grid_values(const CurrentRepr& repr, const MatrixX& kernel_gram);

/// Representer solve: (K_grid + ridge I) beta_axis = phi(a)_axis per axis.
/// ridge < 0 selects the default 1e-10 * trace(K_grid) / N; ridge = 0 is an
/// exact solve and raises NumericalError when the system is numerically
/// singular (bandwidth too large for the grid spacing).
CurrentRepr project_to_grid(const RawCurrent& current, std::shared_ptr<const Grid> grid,
                            Scalar ridge = -1.0);

/// Variant reusing a precomputed grid Gram (it must match grid/kernel).
CurrentRepr project_to_grid(const RawCurrent& current, std::shared_ptr<const Grid> grid,
                            const MatrixX& kernel_gram, Scalar ridge = -1.0);

/// H_K inner product sum_j sum_l beta_j . k(p_j, q_l) beta'_l between any two
/// kernel expansions (atom lists or grid representatives). Both sides must
/// share the kernel bandwidth.
Scalar hk_inner(const RawCurrent& f, const RawCurrent& g);
Scalar hk_inner(const RawCurrent& f, const CurrentRepr& g);
Scalar hk_inner(const CurrentRepr& f, const RawCurrent& g);
Scalar hk_inner(const CurrentRepr& f, const CurrentRepr& g);

/// Discretized L2 pairing of grid-sampled fields: weight * sum_i f(a_i).g(a_i).
Scalar l2_inner(const FieldMatrix& f_values, const FieldMatrix& g_values, const Grid& grid);

}  // namespace currentfit::rkhs
