#include "currentfit/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

namespace currentfit::synth {

namespace {

// Smooth radial basis on the unit sphere (degree 1-2 harmonics-like terms).
Scalar deform_term(int d, const Vec3& n) {
  const Scalar x = n[0], y = n[1], z = n[2];
  switch (d) {
    case 0: return x;
    case 1: return y;
    case 2: return z;
    case 3: return x * y;
    case 4: return y * z;
    case 5: return z * x;
    case 6: return x * x - y * y;
    case 7: return 3.0 * z * z - 1.0;
    default: return 0.0;
  }
}

constexpr int kDeformTerms = 8;

Scalar detail_term(int d, const Vec3& n) {
  const Scalar x = n[0], y = n[1], z = n[2];
  switch (d) {
    case 0: return x * y * z;
    case 1: return x * x * y;
    case 2: return y * y * z;
    case 3: return z * z * x;
    default: return 0.0;
  }
}

constexpr int kDetailTerms = 4;

struct IcoBuilder {
  std::vector<Vec3> vertices;
  std::vector<Eigen::Vector3i> faces;
  std::map<std::pair<int, int>, int> midpoints;

  int midpoint(int a, int b) {
    const auto key = std::minmax(a, b);
    const auto it = midpoints.find(key);
    if (it != midpoints.end()) return it->second;
    const Vec3 m = (vertices[static_cast<size_t>(a)] + vertices[static_cast<size_t>(b)]).normalized();
    vertices.push_back(m);
    const int idx = static_cast<int>(vertices.size()) - 1;
    midpoints.emplace(key, idx);
    return idx;
  }
};

}  // namespace

const std::vector<Scalar>& size_table() {
  static const std::vector<Scalar> sizes = {3, 4, 5, 6, 8, 10, 12};
  return sizes;
}

geom::TriMesh icosphere(int resolution) {
  if (resolution < 0) throw ConfigError("icosphere resolution must be >= 0");
  IcoBuilder builder;
  const Scalar t = (1.0 + std::sqrt(5.0)) / 2.0;
  const Scalar raw[12][3] = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0},
                             {0, -1, t}, {0, 1, t},  {0, -1, -t}, {0, 1, -t},
                             {t, 0, -1}, {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (const auto& v : raw) builder.vertices.push_back(Vec3(v[0], v[1], v[2]).normalized());
  const int raw_faces[20][3] = {{0, 11, 5},  {0, 5, 1},  {0, 1, 7},  {0, 7, 10}, {0, 10, 11},
                                {1, 5, 9},   {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                {3, 9, 4},   {3, 4, 2},  {3, 2, 6},  {3, 6, 8},  {3, 8, 9},
                                {4, 9, 5},   {2, 4, 11}, {6, 2, 10}, {8, 6, 7},  {9, 8, 1}};
  for (const auto& f : raw_faces) builder.faces.emplace_back(f[0], f[1], f[2]);

  for (int level = 0; level < resolution; ++level) {
    std::vector<Eigen::Vector3i> next;
    next.reserve(builder.faces.size() * 4);
    for (const auto& f : builder.faces) {
      const int a = builder.midpoint(f[0], f[1]);
      const int b = builder.midpoint(f[1], f[2]);
      const int c = builder.midpoint(f[2], f[0]);
      next.emplace_back(f[0], a, c);
      next.emplace_back(f[1], b, a);
      next.emplace_back(f[2], c, b);
      next.emplace_back(a, b, c);
    }
    builder.faces = std::move(next);
  }

  geom::TriMesh mesh;
  mesh.vertices.resize(static_cast<Index>(builder.vertices.size()), 3);
  for (size_t i = 0; i < builder.vertices.size(); ++i)
    mesh.vertices.row(static_cast<Index>(i)) = builder.vertices[i].transpose();
  mesh.triangles.resize(static_cast<Index>(builder.faces.size()), 3);
  for (size_t f = 0; f < builder.faces.size(); ++f)
    mesh.triangles.row(static_cast<Index>(f)) = builder.faces[f].transpose();
  mesh.label = "icosphere" + std::to_string(resolution);
  return mesh;
}

geom::TriMesh generate_body(const BodyParams& params) {
  if (!(params.height > 0.0) || !(params.girth > 0.0))
    throw ConfigError("body scales must be positive");
  if (params.resolution < 1) throw ConfigError("body resolution must be >= 1");
  geom::TriMesh mesh = icosphere(params.resolution);

  VectorX detail = VectorX::Zero(kDetailTerms);
  if (params.detail_amp > 0.0) {
    Rng rng(params.seed);
    for (int d = 0; d < kDetailTerms; ++d) detail[d] = params.detail_amp * rng.normal();
  }

  const Scalar base_radius = 0.5;
  for (Index i = 0; i < mesh.vertex_count(); ++i) {
    const Vec3 n = mesh.vertices.row(i).transpose();
    Scalar radial = 1.0;
    for (int d = 0; d < std::min<int>(kDeformTerms, static_cast<int>(params.deform.size())); ++d)
      radial += params.deform[d] * deform_term(d, n);
    for (int d = 0; d < kDetailTerms; ++d) radial += detail[d] * detail_term(d, n);
    radial = std::max<Scalar>(radial, 0.25);
    const Vec3 p = n * (radial * base_radius);
    mesh.vertices(i, 0) = p[0] * params.girth;
    mesh.vertices(i, 1) = p[1] * params.girth;
    mesh.vertices(i, 2) = p[2] * params.height;
  }
  mesh.label = "body";
  return mesh;
}

CorpusPlan plan_corpus(const CorpusParams& params) {
  if (params.n_subjects < 1) throw ConfigError("corpus needs at least one subject");
  CorpusPlan plan;
  plan.master_seed = params.master_seed;
  const auto& sizes = size_table();
  const int n_size = static_cast<int>(sizes.size());
  for (int k = 0; k < params.n_subjects; ++k) {
    SubjectSpec spec;
    char id[16];
    std::snprintf(id, sizeof(id), "S%04d", k + 1);
    spec.id = id;
    spec.body.seed = Rng::substream(params.master_seed, static_cast<std::uint64_t>(k));
    Rng rng(spec.body.seed);

    const Scalar height = rng.uniform(0.95, 1.55);
    spec.body.height = height;
    spec.body.girth = std::clamp(1.0 + 0.10 * rng.normal(), 0.75, 1.30);
    spec.body.age = std::clamp(3.0 + 9.0 * (height - 0.95) / 0.60 + rng.normal(0.0, 0.7), 3.0, 12.0);
    spec.body.sex = rng.uniform() < 0.5 ? 0 : 1;
    spec.body.resolution = params.resolution;
    spec.body.detail_amp = params.detail_amp;
    spec.body.deform.resize(params.deform_dims);
    for (int d = 0; d < params.deform_dims; ++d)
      spec.body.deform[d] = params.deform_scale * rng.normal();

    // Consecutive sizes around the height-implied one; edge subjects get two
    // sizes, occasional subjects fewer (mimics an unbalanced fit study).
    const int ideal = std::clamp(static_cast<int>(std::lround((height - 0.95) / 0.10)), 0, n_size - 1);
    std::vector<int> picks;
    for (int s = ideal - 1; s <= ideal + 1; ++s)
      if (s >= 0 && s < n_size) picks.push_back(s);
    const Scalar roll = rng.uniform();
    if (picks.size() == 3) {
      if (roll < 0.04)
        picks = {ideal};
      else if (roll < 0.12)
        picks.erase(picks.begin() + (rng.uniform() < 0.5 ? 0 : 2));
    } else if (picks.size() == 2 && roll < 0.30) {
      picks = {ideal};
    }
    for (int s : picks) spec.sizes.push_back(sizes[static_cast<size_t>(s)]);
    plan.subjects.push_back(std::move(spec));
  }
  return plan;
}

ResponseSet generate_responses(const CorpusPlan& plan, const MatrixX& subject_features,
                               const MatrixX& hk_gram, const LatentFitModel& model) {
  const Index n_subj = static_cast<Index>(plan.subjects.size());
  if (subject_features.rows() != n_subj)
    throw DataError("feature rows do not match the number of planned subjects");
  const Index r = subject_features.cols();
  if (model.b.size() != r) throw DataError("latent b length does not match the feature length");
  for (Index j = 1; j < model.alpha.size(); ++j)
    if (!(model.alpha[j] > model.alpha[j - 1]))
      throw ConfigError("latent thresholds must be strictly increasing");
  if (model.sigma_u < 0.0) throw ConfigError("latent sigma_u must be non-negative");
  MatrixX gram = hk_gram;
  if (gram.size() == 0) gram = MatrixX::Identity(r, r);

  // Reuse the prediction machinery so the generator and predict_probs agree
  // by construction; the agreement itself is tested, not assumed.
  ordinal::OrdinalModel truth;
  truth.thresholds = model.alpha;
  truth.scalar_coefs.resize(3);
  truth.scalar_coefs << model.beta_size, model.beta_sex, model.beta_age;
  truth.functional_coefs = model.b;
  truth.hk_gram = gram;
  truth.labels = plan.labels;
  truth.has_random_intercept = model.sigma_u > 0.0;
  truth.random_intercept_sd = model.sigma_u;

  ResponseSet out;
  auto& data = out.dataset;
  data.labels = plan.labels;
  data.covariate_names = {"shirt.size", "sex", "age"};
  Index total_rows = 0;
  for (const auto& s : plan.subjects) total_rows += static_cast<Index>(s.sizes.size());
  data.covariates.resize(total_rows, 3);
  data.features.resize(total_rows, r);
  out.true_eta.resize(total_rows);
  out.subject_effects.resize(n_subj);
  out.oracle_labels.resize(static_cast<size_t>(total_rows));

  Index row = 0;
  Index oracle_hits = 0;
  for (Index k = 0; k < n_subj; ++k) {
    const SubjectSpec& subj = plan.subjects[static_cast<size_t>(k)];
    Rng rng(Rng::substream(model.seed == 0 ? plan.master_seed ^ 0x5eedULL : model.seed,
                           static_cast<std::uint64_t>(k)));
    const Scalar u = model.sigma_u * rng.normal();
    out.subject_effects[k] = u;
    const VectorX z = subject_features.row(k).transpose();
    for (Scalar size : subj.sizes) {
      VectorX cov(3);
      cov << size, static_cast<Scalar>(subj.body.sex), subj.body.age;
      const Scalar eta = ordinal::linear_predictor(truth, cov, z);
      out.true_eta[row] = eta;
      const VectorX probs = ordinal::predict_probs(truth, cov, z, u);
      const int drawn = rng.categorical(probs);
      data.subjects.push_back(subj.id);
      data.response_labels.push_back(plan.labels[static_cast<size_t>(drawn)]);
      data.covariates.row(row) = cov.transpose();
      data.features.row(row) = z.transpose();
      const VectorX marg = ordinal::marginal_probs(truth, cov, z, 31);
      const int oracle = ordinal::modal_category(marg);
      out.oracle_labels[static_cast<size_t>(row)] = plan.labels[static_cast<size_t>(oracle)];
      if (oracle == drawn) ++oracle_hits;
      ++row;
    }
  }
  out.oracle_agreement = 100.0 * static_cast<Scalar>(oracle_hits) / static_cast<Scalar>(total_rows);
  return out;
}

}  // namespace currentfit::synth
