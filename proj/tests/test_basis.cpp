#include "currentfit/basis.hpp"

#include <Eigen/Cholesky>

#include <doctest.h>

#include "test_support.hpp"

#include <cmath>
#include <limits>
#include <vector>

using namespace currentfit;
using namespace currentfit::testing;
using doctest::Approx;

namespace {

rkhs::GridKernelContext small_ctx(Scalar lambda = 0.8, int per_axis = 3) {
  return rkhs::make_context(unit_grid(per_axis), rkhs::KernelSpec{lambda});
}

// Grid without cubic symmetry: generically simple scalar spectrum.
rkhs::GridKernelContext asymmetric_ctx(Scalar lambda = 0.9) {
  auto grid = std::make_shared<const rkhs::Grid>(
      rkhs::build_grid(Vec3(0, 0, 0), Vec3(1.0, 1.3, 1.7), 0.5));
  return rkhs::make_context(grid, rkhs::KernelSpec{lambda});
}

rkhs::CurrentRepr repr_from_values(const rkhs::GridKernelContext& ctx, const FieldMatrix& values,
                                   const std::string& label) {
  rkhs::CurrentRepr repr;
  repr.grid = ctx.grid;
  repr.kernel = ctx.kernel;
  repr.label = label;
  repr.beta = ctx.kernel_gram.ldlt().solve(values);
  return repr;
}

std::vector<rkhs::CurrentRepr> random_sample(const rkhs::GridKernelContext& ctx, Index n,
                                             std::uint64_t seed) {
  Rng rng(seed);
  std::vector<rkhs::CurrentRepr> sample;
  for (Index k = 0; k < n; ++k) {
    rkhs::CurrentRepr repr;
    repr.grid = ctx.grid;
    repr.kernel = ctx.kernel;
    repr.label = "s" + std::to_string(k);
    repr.beta = random_field(rng, ctx.grid_size());
    sample.push_back(std::move(repr));
  }
  return sample;
}

// Discretized covariance operator action A f = w * Chat f through the
// centered sample, independent of the basis implementation.
FieldMatrix apply_covariance(const std::vector<FieldMatrix>& values, const FieldMatrix& mean,
                             Scalar weight, const FieldMatrix& f) {
  const Index n = static_cast<Index>(values.size());
  FieldMatrix out = FieldMatrix::Zero(f.rows(), 3);
  for (const auto& v : values) {
    const FieldMatrix centered = v - mean;
    out += centered * centered.cwiseProduct(f).sum();
  }
  return out * (weight / static_cast<Scalar>(n - 1));
}

std::vector<FieldMatrix> grid_values_of(const rkhs::GridKernelContext& ctx,
                                        const std::vector<rkhs::CurrentRepr>& sample) {
  std::vector<FieldMatrix> values;
  for (const auto& s : sample) values.push_back(ctx.kernel_gram * s.beta);
  return values;
}

FieldMatrix mean_of(const std::vector<FieldMatrix>& values) {
  FieldMatrix mean = FieldMatrix::Zero(values[0].rows(), 3);
  for (const auto& v : values) mean += v;
  return mean / static_cast<Scalar>(values.size());
}

Scalar l2_norm(const rkhs::Grid& grid, const FieldMatrix& f) {
  return std::sqrt(rkhs::l2_inner(f, f, grid));
}

}  // namespace

TEST_CASE("kernel basis on a single grid point") {
  auto grid = std::make_shared<const rkhs::Grid>(rkhs::build_grid(Vec3(0, 0, 0), Vec3(1, 1, 1), 1.0));
  REQUIRE(grid->size() == 1);
  REQUIRE(grid->weight == 1.0);
  const auto ctx = rkhs::make_context(grid, rkhs::KernelSpec{0.5});
  CHECK(ctx.spectrum.values[0] == Approx(1.0));
  const auto basis = bases::kernel_basis(ctx, 3);
  for (int l = 0; l < 3; ++l)
    for (int d = 0; d < 3; ++d)
      CHECK(basis.elements[static_cast<size_t>(l)](0, d) == Approx(l == d ? 1.0 : 0.0));
  CHECK(basis.hk_gram.isIdentity(1e-12));
}

TEST_CASE("kernel basis spectrum relations") {
  const auto ctx = small_ctx();
  const int r = 12;
  const auto basis = bases::kernel_basis(ctx, r);

  SUBCASE("eigenvalues occur in triplets and descend") {
    for (int l = 0; l + 1 < r; ++l)
      CHECK(basis.spectrum.eigenvalues[l] >= basis.spectrum.eigenvalues[l + 1] - 1e-12);
    for (int l = 0; l < r; l += 3) {
      CHECK(basis.spectrum.eigenvalues[l] == Approx(basis.spectrum.eigenvalues[l + 1]));
      CHECK(basis.spectrum.eigenvalues[l] == Approx(basis.spectrum.eigenvalues[l + 2]));
    }
  }

  SUBCASE("psi fields are L2-orthonormal and 1/lambda-orthogonal in H_K") {
    for (int i = 0; i < r; ++i)
      for (int j = i; j < r; ++j) {
        const Scalar l2 = rkhs::l2_inner(basis.spectrum.fields[static_cast<size_t>(i)],
                                         basis.spectrum.fields[static_cast<size_t>(j)], *ctx.grid);
        CHECK(std::abs(l2 - (i == j ? 1.0 : 0.0)) <= 1e-8);
        const Scalar hk =
            rkhs::hk_inner_fields(ctx.spectrum, basis.spectrum.fields[static_cast<size_t>(i)],
                                  basis.spectrum.fields[static_cast<size_t>(j)]);
        if (i == j)
          CHECK(hk == Approx(1.0 / basis.spectrum.eigenvalues[i]).epsilon(1e-6));
        else
          CHECK(std::abs(hk) <= 1e-6 / basis.spectrum.eigenvalues[i]);
      }
  }

  SUBCASE("rho fields are H_K-orthonormal") {
    for (int i = 0; i < r; ++i)
      for (int j = i; j < r; ++j) {
        const Scalar hk = rkhs::hk_inner_fields(ctx.spectrum, basis.elements[static_cast<size_t>(i)],
                                                basis.elements[static_cast<size_t>(j)]);
        CHECK(std::abs(hk - (i == j ? 1.0 : 0.0)) <= 1e-8);
      }
  }

  SUBCASE("requesting beyond the lifted rank fails") {
    CHECK_THROWS_AS(bases::kernel_basis(ctx, 3 * static_cast<int>(ctx.spectrum.rank()) + 1), DataError);
  }
}

TEST_CASE("near-constant kernel concentrates mass on the leading triplet") {
  const auto ctx = small_ctx(50.0);
  const Scalar top = ctx.spectrum.values[0];
  const Scalar w_n = ctx.grid->weight * static_cast<Scalar>(ctx.grid_size());
  CHECK(top == Approx(w_n).epsilon(0.01));
  if (ctx.spectrum.rank() > 1) CHECK(top / ctx.spectrum.values[1] >= 10.0);
}

TEST_CASE("covariance basis") {
  const auto ctx = small_ctx();

  SUBCASE("two distinct fields give exactly one positive eigenvalue") {
    auto sample = random_sample(ctx, 2, 61);
    const auto basis = bases::covariance_basis(sample, ctx, 1);
    CHECK(basis.spectrum.numerical_rank == 1);
    const auto values = grid_values_of(ctx, sample);
    FieldMatrix diff = values[0] - values[1];
    diff /= l2_norm(*ctx.grid, diff);
    const Scalar align = std::abs(rkhs::l2_inner(diff, basis.elements[0], *ctx.grid));
    CHECK(align == Approx(1.0).epsilon(1e-8));
    CHECK_THROWS_AS(bases::covariance_basis(sample, ctx, 2), DataError);
  }

  SUBCASE("eigenfields are L2-orthonormal") {
    auto sample = random_sample(ctx, 12, 62);
    const auto basis = bases::covariance_basis(sample, ctx, 8);
    for (int i = 0; i < 8; ++i)
      for (int j = i; j < 8; ++j) {
        const Scalar l2 = rkhs::l2_inner(basis.elements[static_cast<size_t>(i)],
                                         basis.elements[static_cast<size_t>(j)], *ctx.grid);
        CHECK(std::abs(l2 - (i == j ? 1.0 : 0.0)) <= 1e-8);
      }
  }

  SUBCASE("Karhunen-Loeve: coefficient variances equal eigenvalues, correlations vanish") {
    auto sample = random_sample(ctx, 15, 63);
    const int r = 10;
    const auto basis = bases::covariance_basis(sample, ctx, r);
    MatrixX coefs(static_cast<Index>(sample.size()), r);
    for (size_t k = 0; k < sample.size(); ++k)
      coefs.row(static_cast<Index>(k)) = bases::coefficients(sample[k], basis, ctx).values.transpose();
    const Index n = coefs.rows();
    const VectorX mean = coefs.colwise().mean();
    const MatrixX centered = coefs.rowwise() - mean.transpose();
    const MatrixX cov = centered.transpose() * centered / static_cast<Scalar>(n - 1);
    for (int l = 0; l < r; ++l) {
      CHECK(cov(l, l) == Approx(basis.spectrum.eigenvalues[l]).epsilon(1e-8));
      if (l > 0) CHECK(cov(l, l) <= cov(l - 1, l - 1) * (1 + 1e-12));
      for (int p = 0; p < l; ++p)
        CHECK(std::abs(cov(p, l)) / std::sqrt(cov(p, p) * cov(l, l)) <= 1e-7);
    }
  }

  SUBCASE("centered reconstruction error decreases monotonically to zero") {
    auto sample = random_sample(ctx, 9, 64);
    const int rank = static_cast<int>(sample.size()) - 1;
    const auto basis = bases::covariance_basis(sample, ctx, rank);
    const auto values = grid_values_of(ctx, sample);
    Scalar prev = std::numeric_limits<Scalar>::infinity();
    for (int r = 1; r <= rank; ++r) {
      Scalar err = 0.0;
      for (size_t k = 0; k < sample.size(); ++k) {
        const VectorX c = bases::coefficients(sample[k], basis, ctx).values;
        const FieldMatrix rec = bases::reconstruct(basis, c, r);
        err += l2_norm(*ctx.grid, values[k] - rec);
      }
      err /= static_cast<Scalar>(sample.size());
      CHECK(err <= prev + 1e-12);
      prev = err;
    }
    CHECK(prev <= 1e-8);
  }

  SUBCASE("scaling the sample scales eigenvalues quadratically, directions fixed") {
    auto sample = random_sample(ctx, 8, 65);
    const auto base = bases::covariance_basis(sample, ctx, 5);
    auto scaled = sample;
    for (auto& s : scaled) s.beta *= 3.0;
    const auto big = bases::covariance_basis(scaled, ctx, 5);
    for (int l = 0; l < 5; ++l) {
      CHECK(big.spectrum.eigenvalues[l] == Approx(9.0 * base.spectrum.eigenvalues[l]).epsilon(1e-9));
      const Scalar align = std::abs(rkhs::l2_inner(base.elements[static_cast<size_t>(l)],
                                                   big.elements[static_cast<size_t>(l)], *ctx.grid));
      CHECK(align == Approx(1.0).epsilon(1e-8));
    }
  }

  SUBCASE("degenerate and undersized samples are rejected") {
    auto sample = random_sample(ctx, 1, 66);
    CHECK_THROWS_AS(bases::covariance_basis(sample, ctx, 1), DataError);
    auto twice = random_sample(ctx, 1, 67);
    twice.push_back(twice[0]);
    twice[1].label = "copy";
    CHECK_THROWS_AS(bases::covariance_basis(twice, ctx, 1), DataError);
  }
}

TEST_CASE("mixed basis satisfies the simultaneous diagonalization identities") {
  const auto ctx = small_ctx(0.7);
  auto sample = random_sample(ctx, 14, 71);
  const int r = 9;
  const auto basis = bases::mixed_basis(sample, ctx, r);
  const auto values = grid_values_of(ctx, sample);
  const FieldMatrix mean = mean_of(values);

  SUBCASE("L_Gamma u_j = eta_j L_K^{-1} u_j as a matrix-vector residual") {
    for (int j = 0; j < r; ++j) {
      const FieldMatrix& u = basis.elements[static_cast<size_t>(j)];
      const FieldMatrix lhs = apply_covariance(values, mean, ctx.grid->weight, u);
      const FieldMatrix rhs =
          basis.spectrum.eigenvalues[j] * rkhs::apply_operator_power(ctx.spectrum, u, -1.0);
      const Scalar scale = std::max(l2_norm(*ctx.grid, lhs), l2_norm(*ctx.grid, rhs));
      CHECK(l2_norm(*ctx.grid, lhs - rhs) <= 1e-6 * scale);
    }
  }

  SUBCASE("pairings <u_i, L_Gamma u_j> are eta_j delta_ij") {
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j) {
        const FieldMatrix lgu =
            apply_covariance(values, mean, ctx.grid->weight, basis.elements[static_cast<size_t>(j)]);
        const Scalar pair = rkhs::l2_inner(basis.elements[static_cast<size_t>(i)], lgu, *ctx.grid);
        const Scalar expected = i == j ? basis.spectrum.eigenvalues[j] : 0.0;
        CHECK(std::abs(pair - expected) <= 1e-6 * basis.spectrum.eigenvalues[0]);
      }
  }

  SUBCASE("xi coefficients recover in-span expansions") {
    Rng rng(72);
    for (int rep = 0; rep < 5; ++rep) {
      VectorX c(r);
      for (int j = 0; j < r; ++j) c[j] = rng.normal();
      const FieldMatrix f = bases::reconstruct(basis, c);
      const auto repr = repr_from_values(ctx, f, "inspan");
      const VectorX xi = bases::coefficients(repr, basis, ctx).values;
      CHECK((xi - c).cwiseAbs().maxCoeff() <= 1e-6 * c.cwiseAbs().maxCoeff());
      const FieldMatrix rec = bases::reconstruct(basis, xi);
      CHECK(l2_norm(*ctx.grid, f - rec) <= 1e-6 * l2_norm(*ctx.grid, f));
    }
  }

  SUBCASE("truncated expansions are nested H_K projections") {
    // xi_j equals <f, u_j>_{H_K}, so the H_K error is non-increasing in r for
    // any field, and vanishes for fields inside the basis span.
    const int full = static_cast<int>(sample.size()) - 1;
    const auto fullbasis = bases::mixed_basis(sample, ctx, full);
    for (size_t k = 0; k < 3; ++k) {
      const VectorX c = bases::coefficients(sample[k], fullbasis, ctx).values;
      Scalar prev = std::numeric_limits<Scalar>::infinity();
      for (int ruse = 1; ruse <= full; ++ruse) {
        const FieldMatrix rec = bases::reconstruct(fullbasis, c, ruse);
        const FieldMatrix diff = values[k] - rec;
        const Scalar err =
            std::sqrt(std::max<Scalar>(rkhs::hk_inner_fields(ctx.spectrum, diff, diff), 0.0));
        CHECK(err <= prev * (1 + 1e-9) + 1e-12);
        prev = err;
      }
    }
    Rng rng(73);
    VectorX c(full);
    for (int j = 0; j < full; ++j) c[j] = rng.normal();
    const FieldMatrix inspan = bases::reconstruct(fullbasis, c);
    const auto repr = repr_from_values(ctx, inspan, "inspan-full");
    const VectorX xi = bases::coefficients(repr, fullbasis, ctx).values;
    const FieldMatrix diff = inspan - bases::reconstruct(fullbasis, xi);
    CHECK(l2_norm(*ctx.grid, diff) <= 1e-6 * l2_norm(*ctx.grid, inspan));
  }

  SUBCASE("the u_j are H_K-orthonormal (isometry of L_K^{1/2})") {
    const MatrixX gram = bases::basis_hk_gram(basis, ctx);
    CHECK((gram - MatrixX::Identity(r, r)).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("perfectly aligned covariance reproduces the kernel basis") {
  const auto ctx = asymmetric_ctx(0.9);
  const Index n_grid = ctx.grid_size();
  const Index m_modes = 4;
  REQUIRE(ctx.spectrum.rank() >= m_modes + 1);
  for (Index s = 0; s < m_modes; ++s)
    REQUIRE(ctx.spectrum.values[s] > ctx.spectrum.values[s + 1] * (1 + 1e-6));

  // Centered sample whose covariance is exactly c_d times the spectrally
  // truncated kernel per axis: pairs +-(scale q_s) on each canonical axis.
  auto build_aligned = [&](const Vec3& axis_scale) {
    std::vector<rkhs::CurrentRepr> sample;
    const Index n_samples = 2 * 3 * m_modes;
    int idx = 0;
    for (int d = 0; d < 3; ++d)
      for (Index s = 0; s < m_modes; ++s) {
        const Scalar lam = ctx.spectrum.values[s] / ctx.grid->weight;  // K_grid eigenvalue
        const Scalar scale = std::sqrt(axis_scale[d] * lam * static_cast<Scalar>(n_samples - 1) / 2.0);
        FieldMatrix f = FieldMatrix::Zero(n_grid, 3);
        f.col(d) = scale * ctx.spectrum.modes.col(s);
        sample.push_back(repr_from_values(ctx, f, "a" + std::to_string(idx++)));
        sample.push_back(repr_from_values(ctx, -f, "a" + std::to_string(idx++)));
      }
    return sample;
  };

  SUBCASE("axis-tilted scales keep the leading-5 subspaces identical") {
    const auto sample = build_aligned(Vec3(1.2, 1.1, 1.0));
    const auto mixed = bases::mixed_basis(sample, ctx, 5);
    const auto kernel = bases::kernel_basis(ctx, 5);
    const VectorX angles = bases::principal_angles(kernel.elements, mixed.elements, ctx.grid->weight);
    CHECK(angles.maxCoeff() <= 1e-6);
    const Scalar eta0 = mixed.spectrum.eigenvalues[0];
    CHECK(eta0 == Approx(1.2 * ctx.spectrum.values[0] * ctx.spectrum.values[0]).epsilon(1e-8));
  }

  SUBCASE("isotropic scales align full triplets") {
    const auto sample = build_aligned(Vec3(1.0, 1.0, 1.0));
    const auto mixed = bases::mixed_basis(sample, ctx, 6);
    const auto kernel = bases::kernel_basis(ctx, 6);
    const VectorX angles = bases::principal_angles(kernel.elements, mixed.elements, ctx.grid->weight);
    CHECK(angles.maxCoeff() <= 1e-6);
  }
}

TEST_CASE("coefficients dispatch per basis kind") {
  const auto ctx = small_ctx();

  SUBCASE("a kernel basis element expands to a unit vector") {
    const auto basis = bases::kernel_basis(ctx, 6);
    const auto repr = repr_from_values(ctx, basis.elements[2], "rho3");
    const VectorX mu = bases::coefficients(repr, basis, ctx).values;
    for (int l = 0; l < 6; ++l) CHECK(std::abs(mu[l] - (l == 2 ? 1.0 : 0.0)) <= 1e-8);
  }

  SUBCASE("zero field: zero kernel coefficients, negated-mean covariance coefficients") {
    auto sample = random_sample(ctx, 6, 81);
    const auto kernel = bases::kernel_basis(ctx, 5);
    const auto covariance = bases::covariance_basis(sample, ctx, 4);
    rkhs::CurrentRepr zero;
    zero.grid = ctx.grid;
    zero.kernel = ctx.kernel;
    zero.label = "zero";
    zero.beta = FieldMatrix::Zero(ctx.grid_size(), 3);
    CHECK(bases::coefficients(zero, kernel, ctx).values.cwiseAbs().maxCoeff() == 0.0);
    const VectorX sig = bases::coefficients(zero, covariance, ctx).values;
    for (int l = 0; l < 4; ++l) {
      const Scalar expected = -rkhs::l2_inner(covariance.sample_mean,
                                              covariance.elements[static_cast<size_t>(l)], *ctx.grid);
      CHECK(std::abs(sig[l] - expected) <= 1e-12);
    }
  }

  SUBCASE("in-span fields round-trip through coefficients") {
    auto sample = random_sample(ctx, 8, 82);
    const auto basis = bases::covariance_basis(sample, ctx, 6);
    Rng rng(83);
    VectorX c(6);
    for (int l = 0; l < 6; ++l) c[l] = rng.normal();
    const auto repr = repr_from_values(ctx, bases::reconstruct(basis, c), "span");
    const VectorX back = bases::coefficients(repr, basis, ctx).values;
    CHECK((back - c).cwiseAbs().maxCoeff() <= 1e-6 * c.cwiseAbs().maxCoeff());
  }

  SUBCASE("grid and bandwidth mismatches are rejected") {
    const auto basis = bases::kernel_basis(ctx, 3);
    const auto other = small_ctx(0.8, 2);
    auto sample = random_sample(other, 2, 84);
    CHECK_THROWS_AS(bases::coefficients(sample[0], basis, other), DataError);
  }
}

TEST_CASE("hk gram routes agree") {
  const auto ctx = small_ctx();

  SUBCASE("kernel kind is the exact identity") {
    const auto basis = bases::kernel_basis(ctx, 5);
    CHECK(bases::basis_hk_gram(basis, ctx).isIdentity(0.0));
  }

  SUBCASE("rank-1 covariance gram matches the representer route") {
    auto sample = random_sample(ctx, 2, 91);
    const auto basis = bases::covariance_basis(sample, ctx, 1);
    const Scalar via_spectrum = basis.hk_gram(0, 0);
    const FieldMatrix& v = basis.elements[0];
    const FieldMatrix beta = ctx.kernel_gram.ldlt().solve(v);
    Scalar direct = 0.0;
    for (int d = 0; d < 3; ++d) direct += beta.col(d).dot(ctx.kernel_gram * beta.col(d));
    CHECK(via_spectrum == Approx(direct).epsilon(1e-6));
  }
}
