#include "currentfit/basis.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace currentfit::bases {

namespace {

using rkhs::ScalarSpectrum;

constexpr Scalar kRankThreshold = 1e-12;
constexpr Scalar kTieRelGap = 1e-10;

Eigen::Map<const VectorX> stacked(const FieldMatrix& field) {
  return {field.data(), field.size()};
}

void check_sample(std::span<const CurrentRepr> sample, const GridKernelContext& ctx) {
  if (sample.size() < 2) throw DataError("sample size n >= 2 required");
  for (const auto& repr : sample) {
    if (repr.grid->hash() != ctx.grid->hash()) throw DataError("sample current on a different grid");
    if (!(repr.kernel == ctx.kernel)) throw DataError("sample current with a different kernel bandwidth");
  }
}

FieldMatrix unstack(const VectorX& v, Index n) {
  return Eigen::Map<const FieldMatrix>(v.data(), n, 3);
}

void apply_element_sign(FieldMatrix& element, FieldMatrix* dual) {
  Index r = 0, c = 0;
  element.cwiseAbs().maxCoeff(&r, &c);
  if (element(r, c) < 0.0) {
    element = -element;
    if (dual) *dual = -*dual;
  }
}

// Dual-form eigendecomposition of an outer-product operator
// (weight/(n-1)) * X X^T given the columns X (3N x n): returns descending
// positive eigenvalues and the L2-orthonormal eigenfields.
struct DualEig {
  VectorX values;
  std::vector<FieldMatrix> fields;
};

DualEig dual_eigendecomposition(const MatrixX& columns, Scalar weight, Index grid_size) {
  const Index n = columns.cols();
  const MatrixX dual = (weight / static_cast<Scalar>(n - 1)) * (columns.transpose() * columns);
  Eigen::SelfAdjointEigenSolver<MatrixX> solver(dual);
  if (solver.info() != Eigen::Success) throw NumericalError("covariance eigendecomposition failed");

  const VectorX ascending = solver.eigenvalues();
  const Scalar cutoff = kRankThreshold * std::max<Scalar>(ascending[n - 1], 0.0);
  DualEig out;
  std::vector<Scalar> vals;
  for (Index i = n - 1; i >= 0; --i) {
    if (!(ascending[i] > cutoff) || !(ascending[i] > 0.0)) break;
    const VectorX primal = columns * solver.eigenvectors().col(i);
    const Scalar norm = primal.norm();
    if (norm == 0.0) break;
    FieldMatrix field = unstack(primal / (norm * std::sqrt(weight)), grid_size);
    vals.push_back(ascending[i]);
    out.fields.push_back(std::move(field));
  }
  out.values = Eigen::Map<const VectorX>(vals.data(), static_cast<Index>(vals.size()));
  return out;
}

MatrixX spectral_hk_gram(const std::vector<FieldMatrix>& elements, const ScalarSpectrum& spectrum) {
  const int r = static_cast<int>(elements.size());
  MatrixX gram(r, r);
  std::vector<MatrixX> coords(r);
  for (int i = 0; i < r; ++i) coords[i] = rkhs::spectral_coords(spectrum, elements[i]);
  const VectorX scale = spectrum.weight * spectrum.values.cwiseInverse();
  for (int i = 0; i < r; ++i)
    for (int j = i; j < r; ++j) {
      const Scalar v = coords[i].cwiseProduct(scale.asDiagonal() * coords[j]).sum();
      gram(i, j) = v;
      gram(j, i) = v;
    }
  return gram;
}

bool tail_mass_exceeds(const ScalarSpectrum& spectrum, Scalar fraction) {
  return spectrum.discarded_mass > fraction * spectrum.values.sum();
}

FieldMatrix sample_mean_field(std::span<const CurrentRepr> sample, const GridKernelContext& ctx,
                              std::vector<FieldMatrix>* values_out) {
  const Index n_grid = ctx.grid_size();
  FieldMatrix mean = FieldMatrix::Zero(n_grid, 3);
  if (values_out) values_out->reserve(sample.size());
  for (const auto& repr : sample) {
    FieldMatrix values = ctx.kernel_gram * repr.beta;
    mean += values;
    if (values_out) values_out->push_back(std::move(values));
  }
  mean /= static_cast<Scalar>(sample.size());
  return mean;
}

MatrixX centered_columns(const std::vector<FieldMatrix>& values, const FieldMatrix& mean) {
  const Index n = static_cast<Index>(values.size());
  MatrixX columns(mean.size(), n);
  for (Index k = 0; k < n; ++k) columns.col(k) = stacked(values[k]) - stacked(mean);
  return columns;
}

}  // namespace

std::string to_string(BasisKind kind) {
  switch (kind) {
    case BasisKind::Kernel: return "kernel";
    case BasisKind::Covariance: return "covariance";
    case BasisKind::Mixed: return "mixed";
  }
  return "unknown";
}

BasisKind basis_kind_from_string(const std::string& name) {
  if (name == "kernel") return BasisKind::Kernel;
  if (name == "covariance") return BasisKind::Covariance;
  if (name == "mixed") return BasisKind::Mixed;
  throw ConfigError("unknown basis kind: " + name);
}

BasisSet kernel_basis(const GridKernelContext& ctx, int r) {
  if (r < 1) throw ConfigError("truncation r must be >= 1");
  const ScalarSpectrum& spec = ctx.spectrum;
  const Index scalar_rank = spec.rank();
  if (r > 3 * scalar_rank)
    throw DataError("requested r = " + std::to_string(r) + " exceeds basis rank " +
                    std::to_string(3 * scalar_rank));

  // Enumerate the lifted triplets. Scalar modes whose eigenvalues coincide
  // within a relative tie gap form one group ordered (axis, mode).
  struct Entry {
    Index mode;
    int axis;
  };
  std::vector<Entry> order;
  order.reserve(3 * scalar_rank);
  Index start = 0;
  while (start < scalar_rank) {
    Index stop = start + 1;
    while (stop < scalar_rank && spec.values[start] - spec.values[stop] <= kTieRelGap * spec.values[0])
      ++stop;
    for (int axis = 0; axis < 3; ++axis)
      for (Index mode = start; mode < stop; ++mode) order.push_back({mode, axis});
    start = stop;
  }

  BasisSet basis;
  basis.kind = BasisKind::Kernel;
  basis.r = r;
  const Index n_grid = ctx.grid_size();
  const Scalar inv_sqrt_w = 1.0 / std::sqrt(spec.weight);
  basis.spectrum.eigenvalues.resize(r);
  for (int l = 0; l < r; ++l) {
    const auto [mode, axis] = order[static_cast<size_t>(l)];
    const Scalar lambda = spec.values[mode];
    FieldMatrix psi = FieldMatrix::Zero(n_grid, 3);
    psi.col(axis) = spec.modes.col(mode) * inv_sqrt_w;
    basis.spectrum.eigenvalues[l] = lambda;
    basis.spectrum.fields.push_back(psi);
    basis.elements.push_back(std::sqrt(lambda) * psi);
  }
  basis.spectrum.numerical_rank = 3 * scalar_rank;
  basis.hk_gram = MatrixX::Identity(r, r);
  basis.hk_gram_truncated = false;
  basis.sample_mean = FieldMatrix::Zero(n_grid, 3);
  basis.grid_hash = ctx.grid->hash();
  basis.lambda = ctx.kernel.lambda;
  basis.weight = spec.weight;
  return basis;
}

BasisSet covariance_basis(std::span<const CurrentRepr> sample, const GridKernelContext& ctx, int r) {
  if (r < 1) throw ConfigError("truncation r must be >= 1");
  check_sample(sample, ctx);
  const Index n = static_cast<Index>(sample.size());
  const Index n_grid = ctx.grid_size();
  if (r > std::min<Index>(3 * n_grid, n - 1))
    throw DataError("requested r = " + std::to_string(r) + " exceeds the covariance rank bound " +
                    std::to_string(std::min<Index>(3 * n_grid, n - 1)));

  std::vector<FieldMatrix> values;
  FieldMatrix mean = sample_mean_field(sample, ctx, &values);
  const MatrixX columns = centered_columns(values, mean);
  DualEig eig = dual_eigendecomposition(columns, ctx.grid->weight, n_grid);
  if (eig.values.size() == 0) throw DataError("degenerate sample: covariance operator has rank 0");
  if (eig.values.size() < r)
    throw DataError("sample covariance rank " + std::to_string(eig.values.size()) +
                    " is below the requested r = " + std::to_string(r));

  BasisSet basis;
  basis.kind = BasisKind::Covariance;
  basis.r = r;
  basis.spectrum.numerical_rank = eig.values.size();
  basis.spectrum.eigenvalues = eig.values.head(r);
  for (int l = 0; l < r; ++l) {
    FieldMatrix element = eig.fields[static_cast<size_t>(l)];
    apply_element_sign(element, nullptr);
    basis.spectrum.fields.push_back(element);
    basis.elements.push_back(element);
    basis.coef_fields.push_back(std::move(element));
  }
  basis.hk_gram = spectral_hk_gram(basis.elements, ctx.spectrum);
  basis.hk_gram_truncated = tail_mass_exceeds(ctx.spectrum, 0.01);
  basis.sample_mean = std::move(mean);
  basis.grid_hash = ctx.grid->hash();
  basis.lambda = ctx.kernel.lambda;
  basis.weight = ctx.grid->weight;
  return basis;
}

BasisSet mixed_basis(std::span<const CurrentRepr> sample, const GridKernelContext& ctx, int r) {
  if (r < 1) throw ConfigError("truncation r must be >= 1");
  check_sample(sample, ctx);
  const Index n = static_cast<Index>(sample.size());
  const Index n_grid = ctx.grid_size();
  if (r > std::min<Index>(3 * n_grid, n - 1))
    throw DataError("requested r = " + std::to_string(r) + " exceeds the covariance rank bound " +
                    std::to_string(std::min<Index>(3 * n_grid, n - 1)));

  std::vector<FieldMatrix> values;
  FieldMatrix mean = sample_mean_field(sample, ctx, &values);
  MatrixX columns = centered_columns(values, mean);
  // G = L_K^{1/2} L_Gamma L_K^{1/2} in dual form: push each centered column
  // through L_K^{1/2} and eigendecompose the resulting outer product.
  for (Index k = 0; k < n; ++k) {
    const FieldMatrix half = rkhs::apply_operator_power(ctx.spectrum, unstack(columns.col(k), n_grid), 0.5);
    columns.col(k) = stacked(half);
  }
  DualEig eig = dual_eigendecomposition(columns, ctx.grid->weight, n_grid);
  if (eig.values.size() == 0) throw DataError("degenerate sample: operator G has rank 0");
  if (eig.values.size() < r)
    throw DataError("retained rank " + std::to_string(eig.values.size()) + " is below the requested r = " +
                    std::to_string(r) + " (lambda too large or grid too coarse)");

  BasisSet basis;
  basis.kind = BasisKind::Mixed;
  basis.r = r;
  basis.spectrum.numerical_rank = eig.values.size();
  basis.spectrum.eigenvalues = eig.values.head(r);
  for (int j = 0; j < r; ++j) {
    FieldMatrix w_field = eig.fields[static_cast<size_t>(j)];
    FieldMatrix element = rkhs::apply_operator_power(ctx.spectrum, w_field, 0.5);
    FieldMatrix dual = rkhs::apply_operator_power(ctx.spectrum, w_field, -0.5);
    // Orientation is fixed on the element; its w and dual fields flip with it.
    Index mr = 0, mc = 0;
    element.cwiseAbs().maxCoeff(&mr, &mc);
    if (element(mr, mc) < 0.0) {
      element = -element;
      dual = -dual;
      w_field = -w_field;
    }
    basis.spectrum.fields.push_back(std::move(w_field));
    basis.elements.push_back(std::move(element));
    basis.coef_fields.push_back(std::move(dual));
  }
  basis.hk_gram = spectral_hk_gram(basis.elements, ctx.spectrum);
  basis.hk_gram_truncated = tail_mass_exceeds(ctx.spectrum, 0.01);
  basis.sample_mean = std::move(mean);
  basis.grid_hash = ctx.grid->hash();
  basis.lambda = ctx.kernel.lambda;
  basis.weight = ctx.grid->weight;
  return basis;
}

CoefficientVector coefficients(const CurrentRepr& current, const BasisSet& basis,
                               const GridKernelContext& ctx) {
  if (current.grid->hash() != basis.grid_hash) throw DataError("current and basis use different grids");
  if (current.kernel.lambda != basis.lambda) throw DataError("current and basis use different bandwidths");
  CoefficientVector coef;
  coef.label = current.label;
  coef.kind = basis.kind;
  coef.values.resize(basis.r);
  if (basis.kind == BasisKind::Kernel) {
    // mu_l = <phi_bar, rho_l>_{H_K} = sum_i beta_i . rho_l(a_i) by the
    // reproducing property.
    for (int l = 0; l < basis.r; ++l)
      coef.values[l] = current.beta.cwiseProduct(basis.elements[static_cast<size_t>(l)]).sum();
    return coef;
  }
  const FieldMatrix centered = ctx.kernel_gram * current.beta - basis.sample_mean;
  for (int l = 0; l < basis.r; ++l)
    coef.values[l] = rkhs::l2_inner(centered, basis.coef_fields[static_cast<size_t>(l)], *ctx.grid);
  return coef;
}

MatrixX basis_hk_gram(const BasisSet& basis, const GridKernelContext& ctx) {
  if (basis.kind == BasisKind::Kernel) return MatrixX::Identity(basis.r, basis.r);
  return spectral_hk_gram(basis.elements, ctx.spectrum);
}

FieldMatrix reconstruct(const BasisSet& basis, const VectorX& coefs, int r_use) {
  if (r_use < 0) r_use = static_cast<int>(coefs.size());
  if (r_use > basis.r || coefs.size() < r_use)
    throw DataError("reconstruction order exceeds the available coefficients");
  FieldMatrix out = basis.sample_mean;
  for (int l = 0; l < r_use; ++l) out += coefs[l] * basis.elements[static_cast<size_t>(l)];
  return out;
}

VectorX principal_angles(std::span<const FieldMatrix> a, std::span<const FieldMatrix> b, Scalar weight) {
  if (a.empty() || b.empty()) throw DataError("principal angles require non-empty families");
  const Index dim = a[0].size();
  const Scalar root_w = std::sqrt(weight);
  MatrixX ma(dim, static_cast<Index>(a.size()));
  MatrixX mb(dim, static_cast<Index>(b.size()));
  for (size_t i = 0; i < a.size(); ++i) ma.col(static_cast<Index>(i)) = root_w * stacked(a[i]);
  for (size_t i = 0; i < b.size(); ++i) mb.col(static_cast<Index>(i)) = root_w * stacked(b[i]);
  const MatrixX qa = Eigen::HouseholderQR<MatrixX>(ma).householderQ() * MatrixX::Identity(dim, ma.cols());
  const MatrixX qb = Eigen::HouseholderQR<MatrixX>(mb).householderQ() * MatrixX::Identity(dim, mb.cols());
  Eigen::JacobiSVD<MatrixX> svd(qa.transpose() * qb);
  VectorX angles = svd.singularValues();
  for (Index i = 0; i < angles.size(); ++i) angles[i] = std::acos(std::min<Scalar>(angles[i], 1.0));
  std::sort(angles.data(), angles.data() + angles.size());
  return angles;
}

}  // namespace currentfit::bases
