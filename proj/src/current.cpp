#include "currentfit/current.hpp"

#include <Eigen/Cholesky>

namespace currentfit::rkhs {

namespace {

void check_same_kernel(const KernelSpec& a, const KernelSpec& b) {
  if (!(a == b)) throw DataError("kernel bandwidth mismatch between currents");
}

Scalar expansion_inner(const FieldMatrix& pts_f, const FieldMatrix& coef_f, const FieldMatrix& pts_g,
                       const FieldMatrix& coef_g, const KernelSpec& kernel) {
  const MatrixX block = cross_kernel(kernel, pts_f, pts_g);
  return (coef_f.transpose() * block * coef_g).trace();
}

FieldMatrix expansion_eval(const FieldMatrix& pts, const FieldMatrix& coef, const KernelSpec& kernel,
                           const FieldMatrix& at) {
  return cross_kernel(kernel, at, pts) * coef;
}

}  // namespace

RawCurrent current_from_mesh(const geom::DescriptorSet& descriptors, const KernelSpec& kernel,
                             const std::string& label) {
  if (descriptors.size() < 1) throw DataError("current requires at least one atom");
  check_kernel(kernel);
  RawCurrent current;
  current.points = descriptors.centers;
  current.vectors = descriptors.area_vectors;
  current.kernel = kernel;
  current.label = label.empty() ? descriptors.label : label;
  if (!current.points.allFinite() || !current.vectors.allFinite())
    throw DataError("current atoms contain non-finite coordinates");
  return current;
}

FieldMatrix evaluate(const RawCurrent& current, const FieldMatrix& at) {
  return expansion_eval(current.points, current.vectors, current.kernel, at);
}

Vec3 evaluate_at(const RawCurrent& current, const Vec3& y) {
  return evaluate(current, FieldMatrix(y.transpose())).row(0).transpose();
}

FieldMatrix evaluate(const CurrentRepr& repr, const FieldMatrix& at) {
  return expansion_eval(repr.grid->points, repr.beta, repr.kernel, at);
}

Vec3 evaluate_at(const CurrentRepr& repr, const Vec3& y) {
  return evaluate(repr, FieldMatrix(y.transpose())).row(0).transpose();
}

FieldMatrix grid_values(const CurrentRepr& repr, const MatrixX& kernel_gram) {
  return kernel_gram * repr.beta;
}

CurrentRepr project_to_grid(const RawCurrent& current, std::shared_ptr<const Grid> grid, Scalar ridge) {
  const MatrixX gram = kernel_matrix(current.kernel, grid->points);
  return project_to_grid(current, std::move(grid), gram, ridge);
}

CurrentRepr project_to_grid(const RawCurrent& current, std::shared_ptr<const Grid> grid,
                            const MatrixX& kernel_gram, Scalar ridge) {
  const Index n = grid->size();
  if (kernel_gram.rows() != n || kernel_gram.cols() != n)
    throw DataError("kernel Gram does not match the grid size");
  if (ridge < 0.0) ridge = 1e-10 * kernel_gram.trace() / static_cast<Scalar>(n);

  const FieldMatrix targets = evaluate(current, grid->points);
  MatrixX system = kernel_gram;
  system.diagonal().array() += ridge;
  Eigen::LDLT<MatrixX> solver(system);
  if (solver.info() != Eigen::Success)
    throw NumericalError("representer system factorization failed; raise the ridge or change lambda");
  CurrentRepr repr;
  repr.beta = solver.solve(targets);

  const FieldMatrix reproduced = kernel_gram * repr.beta;
  const Scalar residual = (reproduced - targets).rowwise().norm().maxCoeff();
  const Scalar scale = targets.rowwise().norm().maxCoeff();
  if (ridge == 0.0 && scale > 0.0 && !(residual <= 1e-6 * scale))
    throw NumericalError("representer system numerically singular at ridge 0 (residual " +
                         format_full(residual / scale) + " relative); raise the ridge or change lambda");

  repr.grid = std::move(grid);
  repr.kernel = current.kernel;
  repr.label = current.label;
  repr.residual = residual;
  repr.ridge = ridge;
  return repr;
}

Scalar hk_inner(const RawCurrent& f, const RawCurrent& g) {
  check_same_kernel(f.kernel, g.kernel);
  return expansion_inner(f.points, f.vectors, g.points, g.vectors, f.kernel);
}

Scalar hk_inner(const RawCurrent& f, const CurrentRepr& g) {
  check_same_kernel(f.kernel, g.kernel);
  return expansion_inner(f.points, f.vectors, g.grid->points, g.beta, f.kernel);
}

Scalar hk_inner(const CurrentRepr& f, const RawCurrent& g) { return hk_inner(g, f); }

Scalar hk_inner(const CurrentRepr& f, const CurrentRepr& g) {
  check_same_kernel(f.kernel, g.kernel);
  return expansion_inner(f.grid->points, f.beta, g.grid->points, g.beta, f.kernel);
}

Scalar l2_inner(const FieldMatrix& f_values, const FieldMatrix& g_values, const Grid& grid) {
  if (f_values.rows() != grid.size() || g_values.rows() != grid.size())
    throw DataError("field shape does not match the grid size");
  return grid.weight * f_values.cwiseProduct(g_values).sum();
}

}  // namespace currentfit::rkhs
