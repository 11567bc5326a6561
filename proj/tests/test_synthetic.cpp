#include "currentfit/synthetic.hpp"

#include "currentfit/mesh.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

using namespace currentfit;
using doctest::Approx;

TEST_CASE("unit parameters give a closed icosphere") {
  synth::BodyParams params;
  params.resolution = 2;
  const auto mesh = synth::generate_body(params);
  CHECK(mesh.triangle_count() == 320);
  const auto set = geom::triangle_descriptors(mesh);
  const Scalar mass = set.area_vectors.rowwise().norm().sum();
  CHECK(Vec3(set.area_vectors.colwise().sum()).norm() <= 1e-9 * mass);
  // radius 1/2 sphere
  CHECK(mesh.vertices.rowwise().norm().maxCoeff() == Approx(0.5).epsilon(1e-12));
}

TEST_CASE("height scale acts exactly on the z extent") {
  synth::BodyParams params;
  params.resolution = 2;
  params.seed = 42;
  params.detail_amp = 0.02;
  params.deform = VectorX::Zero(8);
  params.deform << 0.05, -0.03, 0.02, 0.01, -0.04, 0.02, 0.03, -0.01;
  const auto base = synth::generate_body(params);
  synth::BodyParams doubled = params;
  doubled.height *= 2.0;
  const auto tall = synth::generate_body(doubled);
  const Scalar base_extent = base.vertices.col(2).maxCoeff() - base.vertices.col(2).minCoeff();
  const Scalar tall_extent = tall.vertices.col(2).maxCoeff() - tall.vertices.col(2).minCoeff();
  CHECK(tall_extent == 2.0 * base_extent);
  // x/y untouched
  CHECK(tall.vertices.col(0) == base.vertices.col(0));
  CHECK(tall.vertices.col(1) == base.vertices.col(1));
}

TEST_CASE("seeds drive the detail layer deterministically") {
  synth::BodyParams params;
  params.resolution = 2;
  params.detail_amp = 0.02;
  params.seed = 7;
  const auto a = synth::generate_body(params);
  const auto b = synth::generate_body(params);
  CHECK(a.vertices == b.vertices);
  CHECK(a.triangles == b.triangles);
  params.seed = 8;
  const auto c = synth::generate_body(params);
  CHECK((a.vertices - c.vertices).cwiseAbs().maxCoeff() > 0.0);
  // closedness survives the deformation
  const auto set = geom::triangle_descriptors(c);
  const Scalar mass = set.area_vectors.rowwise().norm().sum();
  CHECK(Vec3(set.area_vectors.colwise().sum()).norm() <= 1e-9 * mass);
}

TEST_CASE("corpus plans are reproducible and well-formed") {
  synth::CorpusParams params;
  params.n_subjects = 40;
  params.master_seed = 99;
  const auto plan = synth::plan_corpus(params);
  const auto again = synth::plan_corpus(params);
  REQUIRE(plan.subjects.size() == 40);
  const auto& table = synth::size_table();
  std::map<size_t, int> count_by_n;
  for (size_t k = 0; k < plan.subjects.size(); ++k) {
    const auto& s = plan.subjects[k];
    CHECK(s.id == again.subjects[k].id);
    CHECK(s.body.seed == again.subjects[k].body.seed);
    CHECK(s.body.height >= 0.95);
    CHECK(s.body.height <= 1.55);
    CHECK(s.body.age >= 3.0);
    CHECK(s.body.age <= 12.0);
    REQUIRE(!s.sizes.empty());
    CHECK(s.sizes.size() <= 3);
    count_by_n[s.sizes.size()] += 1;
    // sizes are consecutive entries of the size table
    for (size_t i = 0; i < s.sizes.size(); ++i) {
      const auto it = std::find(table.begin(), table.end(), s.sizes[i]);
      CHECK(it != table.end());
      if (i > 0) {
        const auto prev = std::find(table.begin(), table.end(), s.sizes[i - 1]);
        CHECK(it - prev == 1);
      }
    }
  }
  CHECK(count_by_n[3] > count_by_n[1]);  // mostly three sizes
}

TEST_CASE("null latent model samples uniform categories") {
  synth::CorpusParams params;
  params.n_subjects = 1200;
  params.master_seed = 5;
  const auto plan = synth::plan_corpus(params);
  synth::LatentFitModel model;
  model.alpha = VectorX(2);
  model.alpha << std::log(0.5), std::log(2.0);
  model.b = VectorX::Zero(2);
  model.sigma_u = 0.0;
  const MatrixX features = MatrixX::Zero(static_cast<Index>(plan.subjects.size()), 2);
  const auto responses = synth::generate_responses(plan, features, MatrixX(), model);
  const Index n = responses.dataset.rows();
  REQUIRE(n > 2500);
  VectorX freq = VectorX::Zero(3);
  for (int lbl : responses.dataset.response_labels)
    freq[responses.dataset.label_index(lbl)] += 1.0;
  freq /= static_cast<Scalar>(n);
  // binomial 4-sigma band around 1/3
  const Scalar band = 4.0 * std::sqrt((1.0 / 3.0) * (2.0 / 3.0) / static_cast<Scalar>(n));
  for (int j = 0; j < 3; ++j) CHECK(std::abs(freq[j] - 1.0 / 3.0) <= band);
  CHECK(responses.oracle_agreement >= 100.0 / 3.0 - 5.0);
}

TEST_CASE("strong size effect makes responses monotone within subjects") {
  synth::CorpusParams params;
  params.n_subjects = 150;
  params.master_seed = 6;
  const auto plan = synth::plan_corpus(params);
  synth::LatentFitModel model;
  model.alpha = VectorX(2);
  model.alpha << -40.0, 40.0;
  model.beta_size = -50.0;  // each size step overwhelms everything else
  model.b = VectorX::Zero(1);
  model.sigma_u = 0.0;
  const MatrixX features = MatrixX::Zero(static_cast<Index>(plan.subjects.size()), 1);
  const auto responses = synth::generate_responses(plan, features, MatrixX(), model);
  const auto& d = responses.dataset;
  // group rows by subject; responses must be non-decreasing in shirt size
  std::map<std::string, std::vector<std::pair<Scalar, int>>> by_subject;
  for (Index i = 0; i < d.rows(); ++i)
    by_subject[d.subjects[static_cast<size_t>(i)]].push_back(
        {d.covariates(i, 0), d.response_labels[static_cast<size_t>(i)]});
  int violations = 0;
  for (auto& [id, rows] : by_subject) {
    std::sort(rows.begin(), rows.end());
    for (size_t i = 1; i < rows.size(); ++i)
      if (rows[i].second < rows[i - 1].second) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("the generator records the exact fixed-effect linear predictor") {
  synth::CorpusParams params;
  params.n_subjects = 25;
  params.master_seed = 77;
  const auto plan = synth::plan_corpus(params);
  synth::LatentFitModel model;
  model.alpha = VectorX(2);
  model.alpha << -1.0, 1.2;
  model.beta_size = -0.8;
  model.beta_sex = 0.3;
  model.beta_age = 0.7;
  model.b = VectorX(3);
  model.b << 0.5, -0.25, 0.1;
  model.sigma_u = 0.6;
  MatrixX gram(3, 3);
  gram << 1.0, 0.1, 0.0, 0.1, 0.9, -0.05, 0.0, -0.05, 1.1;
  Rng rng(78);
  MatrixX features(static_cast<Index>(plan.subjects.size()), 3);
  for (Index i = 0; i < features.rows(); ++i)
    for (Index j = 0; j < 3; ++j) features(i, j) = rng.normal();
  const auto responses = synth::generate_responses(plan, features, gram, model);
  const auto& d = responses.dataset;
  // independent recomputation of eta per row
  std::map<std::string, Index> subject_row;
  for (size_t k = 0; k < plan.subjects.size(); ++k) subject_row[plan.subjects[k].id] = static_cast<Index>(k);
  for (Index i = 0; i < d.rows(); ++i) {
    const Index k = subject_row[d.subjects[static_cast<size_t>(i)]];
    const VectorX z = features.row(k).transpose();
    Scalar eta = model.beta_size * d.covariates(i, 0) + model.beta_sex * d.covariates(i, 1) +
                 model.beta_age * d.covariates(i, 2);
    for (Index p = 0; p < 3; ++p)
      for (Index l = 0; l < 3; ++l) eta += model.b[p] * gram(p, l) * z[l];
    CHECK(std::abs(eta - responses.true_eta[i]) <= 1e-12 * std::max<Scalar>(1.0, std::abs(eta)));
  }
  // oracle labels belong to the label set and agreement is a percentage
  for (int lbl : responses.oracle_labels) CHECK(d.label_index(lbl) >= 0);
  CHECK(responses.oracle_agreement >= 0.0);
  CHECK(responses.oracle_agreement <= 100.0);
}
