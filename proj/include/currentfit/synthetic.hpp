#pragma once

#include "currentfit/mesh.hpp"
#include "currentfit/ordinal.hpp"
#include "currentfit/rng.hpp"

#include <string>
#include <vector>

namespace currentfit::synth {

/// Parameters of one generated body. The mesh is a subdivided icosahedron
/// (20 * 4^resolution faces) radially deformed by smooth low-order terms and
/// then stretched: x,y by girth, z by height. The z stretch is a final
/// multiply, so doubling `height` doubles the z extent exactly.
struct BodyParams {
  Scalar height = 1.0;
  Scalar girth = 1.0;
  VectorX deform;          // coefficients on the fixed low-frequency basis (up to 8)
  Scalar detail_amp = 0.0; // amplitude of the seed-driven cubic detail layer
  int sex = 0;
  Scalar age = 8.0;
  int resolution = 2;
  std::uint64_t seed = 0;
};

/// Unit icosphere: watertight, consistently outward-oriented.
geom::TriMesh icosphere(int resolution);

/// Deterministic closed body mesh; identical params (including seed) give a
/// bit-identical mesh.
geom::TriMesh generate_body(const BodyParams& params);

/// Ground-truth response model mirrored on the fitted one:
/// logit P(Y <= j) = alpha_j + beta.(size, sex, age) + b^T Gram z + u(k),
/// u(k) ~ N(0, sigma_u^2).
struct LatentFitModel {
  VectorX alpha;  // strictly increasing, size J-1
  Scalar beta_size = 0.0;
  Scalar beta_sex = 0.0;
  Scalar beta_age = 0.0;
  VectorX b;
  Scalar sigma_u = 0.0;
  std::uint64_t seed = 0;
};

struct SubjectSpec {
  std::string id;
  BodyParams body;
  std::vector<Scalar> sizes;  // nominal shirt sizes evaluated for this subject
};

struct CorpusPlan {
  std::vector<SubjectSpec> subjects;
  std::vector<int> labels = {-1, 0, 1};
  std::uint64_t master_seed = 0;
};

struct CorpusParams {
  int n_subjects = 60;
  int resolution = 2;
  int deform_dims = 8;
  Scalar deform_scale = 0.08;
  Scalar detail_amp = 0.01;
  std::uint64_t master_seed = 1;
};

/// Shirt sizes available in the study design (nominal age sizing).
const std::vector<Scalar>& size_table();

/// Draws the subject population: body parameters, covariates and the set of
/// consecutive sizes each subject evaluates (mostly 3, some 2, a few 1).
/// Subject k is driven by the k-th substream of the master seed.
CorpusPlan plan_corpus(const CorpusParams& params);

struct ResponseSet {
  ordinal::OrdinalDataset dataset;
  VectorX true_eta;                // fixed part of the linear predictor per row
  VectorX subject_effects;         // sampled u(k), one per subject (plan order)
  std::vector<int> oracle_labels;  // modal category of the true marginal probabilities
  Scalar oracle_agreement = 0.0;   // fraction where the oracle matches the draw
};

/// Samples ordinal responses from the latent model given each subject's
/// feature vector (rows of `subject_features` follow plan order) and the
/// H_K Gram of the basis the signal lives in.
ResponseSet generate_responses(const CorpusPlan& plan, const MatrixX& subject_features,
                               const MatrixX& hk_gram, const LatentFitModel& model);

}  // namespace currentfit::synth
