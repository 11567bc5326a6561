#pragma once

#include "currentfit/basis.hpp"
#include "currentfit/ordinal.hpp"
#include "currentfit/synthetic.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace currentfit::pipeline {

using bases::BasisKind;

/// Single source of truth for a study run; config files mirror these fields
/// one-to-one (see config.hpp) and CLI flags override individual keys.
struct StudyConfig {
  std::uint64_t master_seed = 1;
  int jobs = 0;  // 0 = hardware concurrency

  // kernel
  Scalar lambda = 0.0;              // 0 = median atom distance of the first subject
  std::vector<Scalar> lambda_grid;  // non-empty enables in-fold selection

  // grid
  Scalar delta = 0.25;
  std::vector<Scalar> delta_sweep;  // extra gaps for the robustness sweep
  bool domain_auto = true;
  Vec3 domain_min = Vec3::Zero();
  Vec3 domain_max = Vec3::Zero();
  Scalar ridge = -1.0;  // < 0: projection default

  // bases
  std::vector<BasisKind> kinds = {BasisKind::Kernel, BasisKind::Covariance, BasisKind::Mixed};
  int r_kernel = 7;
  int r_covariance = 8;
  int r_mixed = 7;
  std::vector<int> r_grid;  // non-empty enables in-fold selection

  // model
  bool mixed_model = true;
  int quadrature_nodes = 15;

  // synthetic corpus (gen-corpus)
  synth::CorpusParams corpus;
  synth::LatentFitModel latent;
  BasisKind signal_basis = BasisKind::Kernel;

  int r_for(BasisKind kind) const;
};

/// Covariate table: one row per (subject, garment size) evaluation.
struct CovariateTable {
  std::vector<std::string> subjects;
  std::vector<int> response_labels;
  MatrixX covariates;
  std::vector<std::string> covariate_names;
  std::vector<int> labels;

  Index rows() const { return static_cast<Index>(subjects.size()); }
  /// Canonical row order: (subject, covariates, response).
  void sort_canonical();
};

/// Everything a study consumes: per-subject mesh descriptors plus the
/// observation table. Subjects are kept sorted by id.
struct StudyInputs {
  std::vector<std::string> subject_ids;
  std::vector<geom::DescriptorSet> descriptors;  // aligned with subject_ids
  CovariateTable observations;

  Index n_subjects() const { return static_cast<Index>(subject_ids.size()); }
  Index subject_index(const std::string& id) const;
};

struct FoldPrediction {
  std::string subject;
  Index observation_row = 0;  // row in the canonical observation table
  int truth_label = 0;
  int predicted_label = 0;
};

struct CVReport {
  std::string kind;
  std::vector<int> labels;
  Eigen::MatrixXi confusion;  // expert decision rows x prediction columns
  Scalar agreement_pct = 0.0;
  Index total = 0;
  std::vector<FoldPrediction> predictions;
  std::vector<std::string> skipped_subjects;
  Index skipped_rows = 0;
  Scalar lambda = 0.0;
  Scalar delta = 0.0;
  int r = 0;
  std::string config_echo;
};

/// Confusion matrix and percentage agreement (trace / total, two decimals).
CVReport agreement_table(const std::vector<int>& predicted, const std::vector<int>& truth,
                         const std::vector<int>& labels);

/// Joins per-subject basis coefficients onto the covariate table.
ordinal::OrdinalDataset assemble_features(const std::vector<rkhs::CurrentRepr>& currents,
                                          const bases::BasisSet& basis, const CovariateTable& table,
                                          const rkhs::GridKernelContext& ctx);

/// Median pairwise distance between the atom centers of one descriptor set.
Scalar median_atom_distance(const geom::DescriptorSet& descriptors);

/// Bounding box over all subjects' atom centers.
std::pair<Vec3, Vec3> corpus_bounding_box(const StudyInputs& inputs);

/// Per-(lambda, delta) shared state: grid, kernel context and the projected
/// current of every subject. Projection is per-subject work, so it is shared
/// across CV folds without leaking between subjects.
struct ProjectionSet {
  rkhs::GridKernelContext ctx;
  std::vector<rkhs::CurrentRepr> currents;  // aligned with StudyInputs subjects
};

ProjectionSet project_all(const StudyInputs& inputs, const StudyConfig& config, Scalar lambda,
                          Scalar delta);

/// Caches ProjectionSets and global kernel bases per (lambda, delta, r).
class StudyCache {
 public:
  explicit StudyCache(const StudyInputs& inputs, const StudyConfig& config)
      : inputs_(inputs), config_(config) {}

  const ProjectionSet& projections(Scalar lambda, Scalar delta);
  const bases::BasisSet& kernel_basis(Scalar lambda, Scalar delta, int r);
  Scalar resolve_lambda(Scalar lambda);

  /// Installs already-computed projections (e.g. loaded from disk artifacts).
  void seed_projections(Scalar lambda, Scalar delta, ProjectionSet ps);

 private:
  const StudyInputs& inputs_;
  const StudyConfig& config_;
  std::map<std::pair<Scalar, Scalar>, std::shared_ptr<ProjectionSet>> projections_;
  std::map<std::tuple<Scalar, Scalar, int>, std::shared_ptr<bases::BasisSet>> kernel_bases_;
  std::optional<Scalar> lambda_default_;
};

/// Basis over the listed training subjects only (the held-out subject's
/// current never enters the eigendecomposition).
bases::BasisSet fold_basis(const ProjectionSet& projections, const std::vector<Index>& train_subjects,
                           BasisKind kind, int r);

struct HyperChoice {
  Scalar lambda = 0.0;
  int r = 0;
};

/// Inner cross-validation over the candidate (lambda, r) grid on the
/// training subjects only. LOSO up to 30 subjects, 5-fold beyond. Ties break
/// toward smaller r, then larger lambda.
HyperChoice select_hyperparams(const std::vector<Index>& train_subjects, const StudyInputs& inputs,
                               const StudyConfig& config, BasisKind kind, StudyCache& cache);

/// Leave-one-subject-out cross-validation at one grid gap. Covariance and
/// mixed bases are rebuilt per fold from the training subjects; predictions
/// use the modal category at random effect 0.
CVReport loso_cv(const StudyInputs& inputs, const StudyConfig& config, BasisKind kind,
                 StudyCache& cache, Scalar delta);

/// Convenience wrapper running every configured kind at the main delta.
std::vector<CVReport> run_study(const StudyInputs& inputs, const StudyConfig& config);

/// Observation table of a generated dataset (features dropped).
CovariateTable table_from_dataset(const ordinal::OrdinalDataset& data);

/// Fully generated synthetic study: planned population, meshes, sampled
/// responses and the generator's Bayes-oracle agreement. Deterministic from
/// config.master_seed.
struct GeneratedStudy {
  synth::CorpusPlan plan;
  StudyInputs inputs;
  ordinal::OrdinalDataset dataset;  // observations with generative-basis features
  VectorX true_eta;
  std::vector<int> oracle_labels;
  Scalar oracle_agreement = 0.0;
  Scalar lambda = 0.0;
};

GeneratedStudy generate_study(const StudyConfig& config);

}  // namespace currentfit::pipeline
