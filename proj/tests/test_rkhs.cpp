#include "currentfit/current.hpp"
#include "currentfit/mesh.hpp"
#include "currentfit/spectral.hpp"
#include "currentfit/synthetic.hpp"

#include <doctest.h>

#include "test_support.hpp"

#include <cmath>

using namespace currentfit;
using namespace currentfit::testing;
using doctest::Approx;

TEST_CASE("grid construction follows the cell-center convention") {
  SUBCASE("unit cube, gap 1/2") {
    const auto grid = rkhs::build_grid(Vec3(0, 0, 0), Vec3(1, 1, 1), 0.5);
    CHECK(grid.size() == 8);
    CHECK(grid.weight == Approx(0.125));
    CHECK(grid.points(0, 0) == Approx(0.25));
    CHECK(grid.points(grid.size() - 1, 2) == Approx(0.75));
  }
  SUBCASE("mixed box") {
    const auto grid = rkhs::build_grid(Vec3(0, 0, 0), Vec3(1, 2, 3), 1.0);
    CHECK(grid.size() == 1 * 2 * 3);
  }
  SUBCASE("points are lexicographically ordered and inside the cover box") {
    const auto grid = rkhs::build_grid(Vec3(-1, 0, 2), Vec3(0.3, 1.1, 3.4), 0.45);
    for (Index i = 1; i < grid.size(); ++i) {
      const auto a = grid.points.row(i - 1);
      const auto b = grid.points.row(i);
      const bool lex = a(0) < b(0) || (a(0) == b(0) && (a(1) < b(1) || (a(1) == b(1) && a(2) < b(2))));
      CHECK(lex);
    }
    for (Index i = 0; i < grid.size(); ++i)
      for (int d = 0; d < 3; ++d) {
        CHECK(grid.points(i, d) >= grid.domain_min[d]);
        CHECK(grid.points(i, d) <= grid.domain_max[d]);
      }
  }
  SUBCASE("degenerate boxes and gaps are rejected") {
    CHECK_THROWS_AS(rkhs::build_grid(Vec3(0, 0, 0), Vec3(1, 0, 1), 0.5), ConfigError);
    CHECK_THROWS_AS(rkhs::build_grid(Vec3(0, 0, 0), Vec3(1, 1, 1), 0.0), ConfigError);
  }
  SUBCASE("study domain from the garment-fit setup") {
    // The source study reports N = 90 at gap 200 on this box; that count is
    // not reproducible under any single fixed rule, so only our convention's
    // count is pinned here.
    const auto grid =
        rkhs::build_grid(Vec3(-472.73, -824.72, -156.70), Vec3(487.27, 735.28, 203.30), 200.0);
    MESSAGE("gap 200 grid size: ", grid.size());
    CHECK(grid.size() == 5 * 8 * 2);
    CHECK(grid.weight == Approx(8e6));
  }
}

TEST_CASE("gaussian kernel values") {
  const rkhs::KernelSpec kernel{2.0};
  const Vec3 x(0.5, -1.0, 2.0);
  CHECK(rkhs::kernel_value(kernel, x, x) == 1.0);
  const Vec3 y = x + Vec3(2.0, 0, 0);  // distance = lambda
  CHECK(rkhs::kernel_value(kernel, x, y) == Approx(std::exp(-1.0)).epsilon(1e-12));
  const Vec3 far = x + Vec3(20.0, 0, 0);  // distance = 10 lambda
  const Scalar k_far = rkhs::kernel_value(kernel, x, far);
  CHECK(k_far == Approx(std::exp(-100.0)).epsilon(1e-10));
  CHECK(k_far >= 0.0);
  CHECK(rkhs::kernel_eval(kernel, x, y)(1, 1) == rkhs::kernel_value(kernel, x, y));
  CHECK(rkhs::kernel_eval(kernel, x, y)(0, 1) == 0.0);
}

TEST_CASE("kernel matrices are exactly symmetric with unit diagonal") {
  Rng rng(7);
  const FieldMatrix pts = random_points(rng, 40);
  const MatrixX gram = rkhs::kernel_matrix(rkhs::KernelSpec{0.3}, pts);
  CHECK((gram - gram.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(gram.diagonal().isConstant(1.0));
}

TEST_CASE("current evaluation matches the brute-force atom sum") {
  const auto mesh = synth::icosphere(2);
  const auto descriptors = geom::triangle_descriptors(mesh);
  const rkhs::KernelSpec kernel{0.4};
  const auto current = rkhs::current_from_mesh(descriptors, kernel);

  SUBCASE("single atom reproduces its vector at the center") {
    geom::DescriptorSet one;
    one.centers = descriptors.centers.topRows(1);
    one.area_vectors = descriptors.area_vectors.topRows(1);
    const auto single = rkhs::current_from_mesh(one, kernel);
    const Vec3 at_center = rkhs::evaluate_at(single, one.centers.row(0).transpose());
    CHECK(at_center.isApprox(one.area_vectors.row(0).transpose(), 1e-14));
  }

  SUBCASE("two identical atoms double the evaluation") {
    geom::DescriptorSet two;
    two.centers.resize(2, 3);
    two.area_vectors.resize(2, 3);
    two.centers << 0.1, 0.2, 0.3, 0.1, 0.2, 0.3;
    two.area_vectors << 1, 2, 3, 1, 2, 3;
    const auto doubled = rkhs::current_from_mesh(two, kernel);
    const Vec3 y(0.4, 0.1, 0.0);
    const Scalar k = rkhs::kernel_value(kernel, two.centers.row(0).transpose(), y);
    CHECK(rkhs::evaluate_at(doubled, y).isApprox(2.0 * k * Vec3(1, 2, 3), 1e-14));
  }

  SUBCASE("random query points against an independent loop") {
    Rng rng(11);
    const FieldMatrix queries = random_points(rng, 5, -1.2, 1.2);
    const FieldMatrix fast = rkhs::evaluate(current, queries);
    for (Index qi = 0; qi < queries.rows(); ++qi) {
      Vec3 slow = Vec3::Zero();
      for (Index j = 0; j < current.size(); ++j)
        slow += rkhs::kernel_value(kernel, current.points.row(j).transpose(), queries.row(qi).transpose()) *
                current.vectors.row(j).transpose();
      CHECK(fast.row(qi).transpose().isApprox(slow, 1e-12));
    }
  }
}

TEST_CASE("projection onto the grid") {
  const rkhs::KernelSpec kernel{0.5};

  SUBCASE("zero current projects to zero with zero residual") {
    geom::DescriptorSet set;
    set.centers = FieldMatrix::Zero(4, 3);
    set.area_vectors = FieldMatrix::Zero(4, 3);
    const auto current = rkhs::current_from_mesh(set, kernel, "zero");
    const auto repr = rkhs::project_to_grid(current, unit_grid(3));
    CHECK(repr.beta.cwiseAbs().maxCoeff() == 0.0);
    CHECK(repr.residual == 0.0);
  }

  SUBCASE("atoms far apart relative to lambda give a near-diagonal system") {
    const rkhs::KernelSpec narrow{0.01};
    auto grid = std::make_shared<const rkhs::Grid>(rkhs::build_grid(Vec3(0, 0, 0), Vec3(4, 1, 1), 1.0));
    geom::DescriptorSet set;
    set.centers = grid->points;  // atoms exactly at grid points
    Rng rng(3);
    set.area_vectors = random_field(rng, grid->size());
    const auto current = rkhs::current_from_mesh(set, narrow, "atoms");
    const auto repr = rkhs::project_to_grid(current, grid, 0.0);
    CHECK((repr.beta - set.area_vectors).cwiseAbs().maxCoeff() <= 1e-10);
  }

  SUBCASE("icosphere current reprojects to small residual on a 4x4x4 grid") {
    const auto mesh = synth::icosphere(2);
    const auto current = rkhs::current_from_mesh(geom::triangle_descriptors(mesh), kernel);
    auto grid = std::make_shared<const rkhs::Grid>(
        rkhs::build_grid(Vec3(-1.1, -1.1, -1.1), Vec3(1.1, 1.1, 1.1), 0.55));
    REQUIRE(grid->size() == 64);
    const auto repr = rkhs::project_to_grid(current, grid, 1e-8);
    const FieldMatrix targets = rkhs::evaluate(current, grid->points);
    const Scalar scale = targets.rowwise().norm().maxCoeff();
    CHECK(repr.residual <= 1e-6 * scale);
    // representer solve with epsilon = 0 reproduces grid evaluations at solver tolerance
    const auto exact = rkhs::project_to_grid(current, grid, 0.0);
    CHECK(exact.residual <= 1e-9 * scale);
  }

  SUBCASE("ill-conditioned system at ridge zero raises a numerical error") {
    const rkhs::KernelSpec wide{50.0};  // grid points indistinguishable at this bandwidth
    const auto mesh = synth::icosphere(1);
    const auto current = rkhs::current_from_mesh(geom::triangle_descriptors(mesh), wide);
    CHECK_THROWS_AS(rkhs::project_to_grid(current, unit_grid(4), 0.0), NumericalError);
  }
}

TEST_CASE("hk_inner matches formulas and oracles") {
  const rkhs::KernelSpec kernel{0.7};

  SUBCASE("single atoms at the same point reduce to the euclidean dot") {
    geom::DescriptorSet a, b;
    a.centers = FieldMatrix::Zero(1, 3);
    b.centers = FieldMatrix::Zero(1, 3);
    a.area_vectors.resize(1, 3);
    b.area_vectors.resize(1, 3);
    a.area_vectors << 1, 2, 3;
    b.area_vectors << -4, 5, 0.5;
    const Scalar inner =
        rkhs::hk_inner(rkhs::current_from_mesh(a, kernel), rkhs::current_from_mesh(b, kernel));
    CHECK(inner == Approx(1 * -4 + 2 * 5 + 3 * 0.5).epsilon(1e-14));
  }

  SUBCASE("brute-force double loop on 30 atoms") {
    Rng rng(21);
    const auto f = random_current(rng, 30, kernel, "f");
    const auto g = random_current(rng, 30, kernel, "g");
    Scalar slow = 0.0;
    for (Index j = 0; j < f.size(); ++j)
      for (Index l = 0; l < g.size(); ++l)
        slow += rkhs::kernel_value(kernel, f.points.row(j).transpose(), g.points.row(l).transpose()) *
                f.vectors.row(j).dot(g.vectors.row(l));
    const Scalar fast = rkhs::hk_inner(f, g);
    CHECK(fast == Approx(slow).epsilon(1e-12));
    CHECK(rkhs::hk_inner(g, f) == Approx(fast).epsilon(1e-13));
  }

  SUBCASE("positivity and Cauchy-Schwarz") {
    Rng rng(22);
    for (int rep = 0; rep < 10; ++rep) {
      const auto f = random_current(rng, 12, kernel);
      const auto g = random_current(rng, 9, kernel);
      const Scalar ff = rkhs::hk_inner(f, f);
      const Scalar gg = rkhs::hk_inner(g, g);
      const Scalar fg = rkhs::hk_inner(f, g);
      CHECK(ff >= 0.0);
      CHECK(fg * fg <= ff * gg * (1.0 + 1e-10));
    }
  }

  SUBCASE("bilinearity in the second argument") {
    Rng rng(23);
    const auto f = random_current(rng, 8, kernel);
    auto g = random_current(rng, 8, kernel);
    const Scalar base = rkhs::hk_inner(f, g);
    g.vectors *= 2.5;
    CHECK(rkhs::hk_inner(f, g) == Approx(2.5 * base).epsilon(1e-12));
  }

  SUBCASE("kernel mismatch is rejected") {
    Rng rng(24);
    const auto f = random_current(rng, 3, kernel);
    const auto g = random_current(rng, 3, rkhs::KernelSpec{0.9});
    CHECK_THROWS_AS(rkhs::hk_inner(f, g), DataError);
  }
}

TEST_CASE("discretized l2 pairing") {
  const auto grid = *unit_grid(3);
  const Index n = grid.size();
  SUBCASE("constant unit fields") {
    FieldMatrix e1 = FieldMatrix::Zero(n, 3);
    e1.col(0).setOnes();
    FieldMatrix e2 = FieldMatrix::Zero(n, 3);
    e2.col(1).setOnes();
    CHECK(rkhs::l2_inner(e1, e1, grid) == Approx(grid.weight * n).epsilon(1e-14));
    CHECK(rkhs::l2_inner(e1, e2, grid) == 0.0);
  }
  SUBCASE("random fields against a naive loop") {
    Rng rng(31);
    const FieldMatrix f = random_field(rng, n);
    const FieldMatrix g = random_field(rng, n);
    Scalar slow = 0.0;
    for (Index i = 0; i < n; ++i) slow += grid.weight * f.row(i).dot(g.row(i));
    CHECK(rkhs::l2_inner(f, g, grid) == Approx(slow).epsilon(1e-14));
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(rkhs::l2_inner(FieldMatrix::Zero(2, 3), FieldMatrix::Zero(n, 3), grid), DataError);
  }
}

TEST_CASE("reproducing property of the grid representative") {
  const rkhs::KernelSpec kernel{0.6};
  auto grid = unit_grid(4);  // 64 points
  Rng rng(41);
  for (int rep = 0; rep < 100; ++rep) {
    const auto f = random_repr(rng, grid, kernel);
    geom::DescriptorSet atom;
    atom.centers = random_points(rng, 1);
    atom.area_vectors = random_field(rng, 1);
    const auto single = rkhs::current_from_mesh(atom, kernel);
    const Scalar lhs = rkhs::hk_inner(single, f);
    const Scalar rhs = atom.area_vectors.row(0).dot(
        rkhs::evaluate_at(f, atom.centers.row(0).transpose()));
    const Scalar scale = atom.area_vectors.row(0).norm() * f.beta.rowwise().norm().sum();
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max<Scalar>(scale, 1.0));
  }
}

TEST_CASE("hk_inner through the spectrum agrees with the representer route") {
  const rkhs::KernelSpec kernel{0.8};
  auto grid = unit_grid(3);
  const auto ctx = rkhs::make_context(grid, kernel);
  Rng rng(51);
  // fields synthesized inside the kernel span
  const FieldMatrix f_coef = random_field(rng, grid->size());
  const FieldMatrix g_coef = random_field(rng, grid->size());
  const FieldMatrix f_vals = ctx.kernel_gram * f_coef;
  const FieldMatrix g_vals = ctx.kernel_gram * g_coef;
  const Scalar spectral = rkhs::hk_inner_fields(ctx.spectrum, f_vals, g_vals);
  // representer route: sum_axis coef_f . K coef_g
  Scalar direct = 0.0;
  for (int d = 0; d < 3; ++d) direct += f_coef.col(d).dot(ctx.kernel_gram * g_coef.col(d));
  // scale by the weight convention: <f,g>_HK on value fields uses weighted coords
  CHECK(spectral == Approx(direct).epsilon(1e-8));
}
