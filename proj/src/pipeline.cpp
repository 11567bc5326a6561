#include "currentfit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <set>

namespace currentfit::pipeline {

namespace {

std::vector<Index> rows_of_subjects(const CovariateTable& table,
                                    const std::vector<std::string>& wanted) {
  std::set<std::string> ids(wanted.begin(), wanted.end());
  std::vector<Index> rows;
  for (Index i = 0; i < table.rows(); ++i)
    if (ids.count(table.subjects[static_cast<size_t>(i)])) rows.push_back(i);
  return rows;
}

// Canonical subject order: every accumulation across subjects (covariance
// columns, folds, reports) runs in id order, so results do not depend on the
// order the corpus was loaded in.
std::vector<Index> sorted_by_id(const StudyInputs& inputs, std::vector<Index> indices) {
  std::sort(indices.begin(), indices.end(), [&](Index a, Index b) {
    return inputs.subject_ids[static_cast<size_t>(a)] < inputs.subject_ids[static_cast<size_t>(b)];
  });
  return indices;
}

struct FoldOutcome {
  bool skipped = false;
  std::string skip_reason;
  Index skipped_rows = 0;
  std::vector<FoldPrediction> predictions;
};

// Shared fold worker for the outer LOSO and the inner selection CV: builds
// the basis from the training subjects, fits, and predicts the test rows.
FoldOutcome fit_and_predict(const StudyInputs& inputs, const StudyConfig& config, BasisKind kind,
                            const ProjectionSet& ps, const bases::BasisSet* global_kernel_basis,
                            std::vector<Index> train_subjects, std::vector<Index> test_subjects, int r) {
  train_subjects = sorted_by_id(inputs, std::move(train_subjects));
  test_subjects = sorted_by_id(inputs, std::move(test_subjects));
  const CovariateTable& table = inputs.observations;
  std::vector<std::string> train_ids, test_ids;
  for (Index s : train_subjects) train_ids.push_back(inputs.subject_ids[static_cast<size_t>(s)]);
  for (Index s : test_subjects) test_ids.push_back(inputs.subject_ids[static_cast<size_t>(s)]);
  const std::vector<Index> train_rows = rows_of_subjects(table, train_ids);
  const std::vector<Index> test_rows = rows_of_subjects(table, test_ids);

  FoldOutcome out;
  out.skipped_rows = static_cast<Index>(test_rows.size());

  // training fold must observe every category
  std::set<int> seen;
  for (Index i : train_rows) seen.insert(table.response_labels[static_cast<size_t>(i)]);
  if (seen.size() != table.labels.size()) {
    out.skipped = true;
    out.skip_reason = "training fold is missing a response category";
    return out;
  }

  bases::BasisSet local_basis;
  const bases::BasisSet* basis = nullptr;
  if (kind == BasisKind::Kernel) {
    basis = global_kernel_basis;
    if (!basis) {
      local_basis = bases::kernel_basis(ps.ctx, r);
      basis = &local_basis;
    }
  } else {
    local_basis = fold_basis(ps, train_subjects, kind, r);
    basis = &local_basis;
  }

  // per-subject coefficient vectors under the fold basis
  std::map<std::string, VectorX> z;
  for (Index s : train_subjects)
    z[inputs.subject_ids[static_cast<size_t>(s)]] =
        bases::coefficients(ps.currents[static_cast<size_t>(s)], *basis, ps.ctx).values;
  for (Index s : test_subjects)
    z[inputs.subject_ids[static_cast<size_t>(s)]] =
        bases::coefficients(ps.currents[static_cast<size_t>(s)], *basis, ps.ctx).values;

  ordinal::OrdinalDataset train;
  train.labels = table.labels;
  train.covariate_names = table.covariate_names;
  train.covariates.resize(static_cast<Index>(train_rows.size()), table.covariates.cols());
  train.features.resize(static_cast<Index>(train_rows.size()), r);
  for (size_t i = 0; i < train_rows.size(); ++i) {
    const Index src = train_rows[i];
    train.subjects.push_back(table.subjects[static_cast<size_t>(src)]);
    train.response_labels.push_back(table.response_labels[static_cast<size_t>(src)]);
    train.covariates.row(static_cast<Index>(i)) = table.covariates.row(src);
    train.features.row(static_cast<Index>(i)) = z.at(table.subjects[static_cast<size_t>(src)]).transpose();
  }

  ordinal::FitOptions options;
  options.quadrature_nodes = config.quadrature_nodes;
  const ordinal::OrdinalModel model = config.mixed_model ? ordinal::fit_mixed(train, basis->hk_gram, options)
                                                         : ordinal::fit_fixed(train, basis->hk_gram, options);

  out.skipped_rows = 0;
  for (Index src : test_rows) {
    const VectorX cov = table.covariates.row(src).transpose();
    const VectorX probs =
        ordinal::predict_probs(model, cov, z.at(table.subjects[static_cast<size_t>(src)]), 0.0);
    FoldPrediction pred;
    pred.subject = table.subjects[static_cast<size_t>(src)];
    pred.observation_row = src;
    pred.truth_label = table.response_labels[static_cast<size_t>(src)];
    pred.predicted_label = table.labels[static_cast<size_t>(ordinal::modal_category(probs))];
    out.predictions.push_back(std::move(pred));
  }
  return out;
}

std::vector<std::vector<Index>> inner_fold_partition(const std::vector<Index>& subjects) {
  std::vector<std::vector<Index>> folds;
  if (subjects.size() <= 30) {
    for (Index s : subjects) folds.push_back({s});
    return folds;
  }
  const size_t k = 5;
  folds.resize(k);
  for (size_t i = 0; i < subjects.size(); ++i) folds[i % k].push_back(subjects[i]);
  return folds;
}

}  // namespace

int StudyConfig::r_for(BasisKind kind) const {
  switch (kind) {
    case BasisKind::Kernel: return r_kernel;
    case BasisKind::Covariance: return r_covariance;
    case BasisKind::Mixed: return r_mixed;
  }
  return r_kernel;
}

void CovariateTable::sort_canonical() {
  const Index n = rows();
  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  auto less = [&](Index a, Index b) {
    if (subjects[static_cast<size_t>(a)] != subjects[static_cast<size_t>(b)])
      return subjects[static_cast<size_t>(a)] < subjects[static_cast<size_t>(b)];
    for (Index c = 0; c < covariates.cols(); ++c)
      if (covariates(a, c) != covariates(b, c)) return covariates(a, c) < covariates(b, c);
    return response_labels[static_cast<size_t>(a)] < response_labels[static_cast<size_t>(b)];
  };
  std::sort(order.begin(), order.end(), less);
  CovariateTable sorted;
  sorted.covariate_names = covariate_names;
  sorted.labels = labels;
  sorted.covariates.resize(n, covariates.cols());
  for (Index i = 0; i < n; ++i) {
    const Index src = order[static_cast<size_t>(i)];
    sorted.subjects.push_back(subjects[static_cast<size_t>(src)]);
    sorted.response_labels.push_back(response_labels[static_cast<size_t>(src)]);
    sorted.covariates.row(i) = covariates.row(src);
  }
  *this = std::move(sorted);
}

Index StudyInputs::subject_index(const std::string& id) const {
  for (size_t i = 0; i < subject_ids.size(); ++i)
    if (subject_ids[i] == id) return static_cast<Index>(i);
  throw DataError("no mesh for subject '" + id + "'");
}

CVReport agreement_table(const std::vector<int>& predicted, const std::vector<int>& truth,
                         const std::vector<int>& labels) {
  if (predicted.size() != truth.size()) throw DataError("prediction and truth lengths differ");
  const int J = static_cast<int>(labels.size());
  auto index_of = [&](int label) {
    for (int j = 0; j < J; ++j)
      if (labels[static_cast<size_t>(j)] == label) return j;
    throw DataError("label " + std::to_string(label) + " outside the category set");
  };
  CVReport report;
  report.labels = labels;
  report.confusion = Eigen::MatrixXi::Zero(J, J);
  for (size_t i = 0; i < truth.size(); ++i)
    report.confusion(index_of(truth[i]), index_of(predicted[i])) += 1;
  report.total = static_cast<Index>(truth.size());
  const Scalar pct =
      report.total == 0 ? 0.0
                        : 100.0 * static_cast<Scalar>(report.confusion.trace()) / static_cast<Scalar>(report.total);
  report.agreement_pct = std::round(pct * 100.0) / 100.0;
  return report;
}

ordinal::OrdinalDataset assemble_features(const std::vector<rkhs::CurrentRepr>& currents,
                                          const bases::BasisSet& basis, const CovariateTable& table,
                                          const rkhs::GridKernelContext& ctx) {
  // reject duplicate (subject, covariates) rows
  for (Index i = 0; i + 1 < table.rows(); ++i)
    for (Index j = i + 1; j < table.rows(); ++j) {
      if (table.subjects[static_cast<size_t>(i)] != table.subjects[static_cast<size_t>(j)]) continue;
      if ((table.covariates.row(i).array() == table.covariates.row(j).array()).all())
        throw DataError("duplicate observation row for subject '" + table.subjects[static_cast<size_t>(i)] + "'");
    }

  std::map<std::string, VectorX> z;
  for (Index i = 0; i < table.rows(); ++i) {
    const std::string& id = table.subjects[static_cast<size_t>(i)];
    if (z.count(id)) continue;
    const rkhs::CurrentRepr* found = nullptr;
    for (const auto& c : currents)
      if (c.label == id) {
        found = &c;
        break;
      }
    if (!found) throw DataError("missing current for subject '" + id + "'");
    z[id] = bases::coefficients(*found, basis, ctx).values;
  }

  ordinal::OrdinalDataset data;
  data.labels = table.labels;
  data.covariate_names = table.covariate_names;
  data.subjects = table.subjects;
  data.response_labels = table.response_labels;
  data.covariates = table.covariates;
  data.features.resize(table.rows(), basis.r);
  for (Index i = 0; i < table.rows(); ++i)
    data.features.row(i) = z.at(table.subjects[static_cast<size_t>(i)]).transpose();
  return data;
}

Scalar median_atom_distance(const geom::DescriptorSet& descriptors) {
  const Index n = descriptors.size();
  if (n < 2) throw DataError("median atom distance needs at least two atoms");
  // cap the pair count by striding; deterministic
  const Index cap = 1000;
  const Index stride = n > cap ? (n + cap - 1) / cap : 1;
  std::vector<Index> picks;
  for (Index i = 0; i < n; i += stride) picks.push_back(i);
  std::vector<Scalar> dists;
  dists.reserve(picks.size() * (picks.size() - 1) / 2);
  for (size_t a = 0; a < picks.size(); ++a)
    for (size_t b = a + 1; b < picks.size(); ++b)
      dists.push_back((descriptors.centers.row(picks[a]) - descriptors.centers.row(picks[b])).norm());
  auto mid = dists.begin() + static_cast<long>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  return *mid;
}

std::pair<Vec3, Vec3> corpus_bounding_box(const StudyInputs& inputs) {
  if (inputs.descriptors.empty()) throw DataError("empty corpus");
  Vec3 lo = inputs.descriptors[0].centers.colwise().minCoeff().transpose();
  Vec3 hi = inputs.descriptors[0].centers.colwise().maxCoeff().transpose();
  for (const auto& d : inputs.descriptors) {
    lo = lo.cwiseMin(d.centers.colwise().minCoeff().transpose());
    hi = hi.cwiseMax(d.centers.colwise().maxCoeff().transpose());
  }
  return {lo, hi};
}

ProjectionSet project_all(const StudyInputs& inputs, const StudyConfig& config, Scalar lambda,
                          Scalar delta) {
  Vec3 lo = config.domain_min, hi = config.domain_max;
  if (config.domain_auto) std::tie(lo, hi) = corpus_bounding_box(inputs);
  auto grid = std::make_shared<const rkhs::Grid>(rkhs::build_grid(lo, hi, delta));
  ProjectionSet ps;
  ps.ctx = rkhs::make_context(grid, rkhs::KernelSpec{lambda});
  ps.currents.resize(inputs.descriptors.size());
  const int jobs = config.jobs > 0 ? config.jobs : default_jobs();
  parallel_for(inputs.n_subjects(), jobs, [&](Index k) {
    const rkhs::RawCurrent raw = rkhs::current_from_mesh(
        inputs.descriptors[static_cast<size_t>(k)], ps.ctx.kernel, inputs.subject_ids[static_cast<size_t>(k)]);
    ps.currents[static_cast<size_t>(k)] = rkhs::project_to_grid(raw, grid, ps.ctx.kernel_gram, config.ridge);
  });
  return ps;
}

const ProjectionSet& StudyCache::projections(Scalar lambda, Scalar delta) {
  static std::mutex mtx;
  std::lock_guard<std::mutex> lock(mtx);
  const auto key = std::make_pair(lambda, delta);
  auto it = projections_.find(key);
  if (it == projections_.end()) {
    auto ps = std::make_shared<ProjectionSet>(project_all(inputs_, config_, lambda, delta));
    it = projections_.emplace(key, std::move(ps)).first;
  }
  return *it->second;
}

const bases::BasisSet& StudyCache::kernel_basis(Scalar lambda, Scalar delta, int r) {
  const ProjectionSet& ps = projections(lambda, delta);
  static std::mutex mtx;
  std::lock_guard<std::mutex> lock(mtx);
  const auto key = std::make_tuple(lambda, delta, r);
  auto it = kernel_bases_.find(key);
  if (it == kernel_bases_.end()) {
    auto basis = std::make_shared<bases::BasisSet>(bases::kernel_basis(ps.ctx, r));
    it = kernel_bases_.emplace(key, std::move(basis)).first;
  }
  return *it->second;
}

void StudyCache::seed_projections(Scalar lambda, Scalar delta, ProjectionSet ps) {
  projections_[std::make_pair(lambda, delta)] = std::make_shared<ProjectionSet>(std::move(ps));
}

Scalar StudyCache::resolve_lambda(Scalar lambda) {
  if (lambda > 0.0) return lambda;
  if (!lambda_default_) {
    if (inputs_.descriptors.empty()) throw DataError("empty corpus");
    // reference mesh: the subject with the lexicographically smallest id
    size_t ref = 0;
    for (size_t i = 1; i < inputs_.subject_ids.size(); ++i)
      if (inputs_.subject_ids[i] < inputs_.subject_ids[ref]) ref = i;
    lambda_default_ = median_atom_distance(inputs_.descriptors[ref]);
  }
  return *lambda_default_;
}

bases::BasisSet fold_basis(const ProjectionSet& projections, const std::vector<Index>& train_subjects,
                           BasisKind kind, int r) {
  if (kind == BasisKind::Kernel) return bases::kernel_basis(projections.ctx, r);
  std::vector<rkhs::CurrentRepr> train;
  train.reserve(train_subjects.size());
  for (Index s : train_subjects) train.push_back(projections.currents[static_cast<size_t>(s)]);
  if (kind == BasisKind::Covariance) return bases::covariance_basis(train, projections.ctx, r);
  return bases::mixed_basis(train, projections.ctx, r);
}

HyperChoice select_hyperparams(const std::vector<Index>& train_subjects_in, const StudyInputs& inputs,
                               const StudyConfig& config, BasisKind kind, StudyCache& cache) {
  const std::vector<Index> train_subjects = sorted_by_id(inputs, train_subjects_in);
  std::vector<Scalar> lambdas = config.lambda_grid;
  if (lambdas.empty()) lambdas = {cache.resolve_lambda(config.lambda)};
  std::vector<int> rs = config.r_grid;
  if (rs.empty()) rs = {config.r_for(kind)};
  if (lambdas.size() == 1 && rs.size() == 1) return {lambdas[0], rs[0]};

  const auto folds = inner_fold_partition(train_subjects);
  HyperChoice best;
  Scalar best_agreement = -1.0;
  bool any_feasible = false;
  for (Scalar lambda : lambdas) {
    for (int r : rs) {
      Index hits = 0, total = 0;
      bool failed = true;
      try {
        const ProjectionSet& ps = cache.projections(lambda, config.delta);
        for (const auto& held_out : folds) {
          std::vector<Index> inner_train;
          for (Index s : train_subjects)
            if (std::find(held_out.begin(), held_out.end(), s) == held_out.end())
              inner_train.push_back(s);
          try {
            const FoldOutcome outcome =
                fit_and_predict(inputs, config, kind, ps, nullptr, inner_train, held_out, r);
            if (outcome.skipped) continue;
            for (const auto& p : outcome.predictions) {
              total += 1;
              if (p.predicted_label == p.truth_label) hits += 1;
            }
            failed = false;
          } catch (const NumericalError&) {
            continue;
          } catch (const DataError&) {
            continue;
          }
        }
      } catch (const NumericalError&) {
        failed = true;
      } catch (const DataError&) {
        failed = true;
      }
      if (failed || total == 0) continue;
      any_feasible = true;
      const Scalar agreement = 100.0 * static_cast<Scalar>(hits) / static_cast<Scalar>(total);
      const bool better = agreement > best_agreement ||
                          (agreement == best_agreement && (r < best.r || (r == best.r && lambda > best.lambda)));
      if (better) {
        best = {lambda, r};
        best_agreement = agreement;
      }
    }
  }
  if (!any_feasible) throw ConfigError("hyper-parameter selection: no (lambda, r) candidate could be fitted");
  return best;
}

CVReport loso_cv(const StudyInputs& inputs, const StudyConfig& config, BasisKind kind,
                 StudyCache& cache, Scalar delta) {
  const Index n = inputs.n_subjects();
  if (n < 3) throw DataError("leave-one-subject-out needs at least 3 subjects");
  const Scalar lambda0 = config.lambda_grid.size() == 1 ? config.lambda_grid[0]
                                                        : cache.resolve_lambda(config.lambda);
  const size_t n_lambda = config.lambda_grid.empty() ? 1 : config.lambda_grid.size();
  const size_t n_r = config.r_grid.empty() ? 1 : config.r_grid.size();
  const bool selection = n_lambda * n_r > 1;

  // warm the shared cache before the parallel fold loop
  if (config.lambda_grid.empty())
    cache.projections(lambda0, delta);
  else
    for (Scalar l : config.lambda_grid) cache.projections(l, delta);
  const int r0 = config.r_grid.size() == 1 ? config.r_grid[0] : config.r_for(kind);
  const bases::BasisSet* global_kernel = nullptr;
  if (kind == BasisKind::Kernel && !selection) global_kernel = &cache.kernel_basis(lambda0, delta, r0);

  std::vector<Index> all(static_cast<size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});
  const std::vector<Index> fold_order = sorted_by_id(inputs, all);

  std::vector<FoldOutcome> outcomes(static_cast<size_t>(n));
  const int jobs = config.jobs > 0 ? config.jobs : default_jobs();
  parallel_for(n, jobs, [&](Index f) {
    const Index k = fold_order[static_cast<size_t>(f)];
    std::vector<Index> train;
    for (Index s = 0; s < n; ++s)
      if (s != k) train.push_back(s);
    HyperChoice choice{lambda0, r0};
    if (selection) choice = select_hyperparams(train, inputs, config, kind, cache);
    const ProjectionSet& ps = cache.projections(choice.lambda, delta);
    outcomes[static_cast<size_t>(f)] = fit_and_predict(inputs, config, kind, ps,
                                                       selection ? nullptr : global_kernel, train, {k},
                                                       choice.r);
  });

  std::vector<int> predicted, truth;
  CVReport report;
  for (Index f = 0; f < n; ++f) {
    const Index k = fold_order[static_cast<size_t>(f)];
    FoldOutcome& o = outcomes[static_cast<size_t>(f)];
    if (o.skipped) {
      report.skipped_subjects.push_back(inputs.subject_ids[static_cast<size_t>(k)] + " (" + o.skip_reason + ")");
      report.skipped_rows += o.skipped_rows;
      continue;
    }
    for (auto& p : o.predictions) {
      predicted.push_back(p.predicted_label);
      truth.push_back(p.truth_label);
      report.predictions.push_back(std::move(p));
    }
  }
  CVReport counts = agreement_table(predicted, truth, inputs.observations.labels);
  report.labels = counts.labels;
  report.confusion = counts.confusion;
  report.agreement_pct = counts.agreement_pct;
  report.total = counts.total;
  report.kind = bases::to_string(kind);
  report.lambda = lambda0;
  report.delta = delta;
  report.r = selection ? -1 : r0;
  return report;
}

std::vector<CVReport> run_study(const StudyInputs& inputs, const StudyConfig& config) {
  StudyCache cache(inputs, config);
  std::vector<CVReport> reports;
  for (BasisKind kind : config.kinds) reports.push_back(loso_cv(inputs, config, kind, cache, config.delta));
  return reports;
}

CovariateTable table_from_dataset(const ordinal::OrdinalDataset& data) {
  CovariateTable table;
  table.subjects = data.subjects;
  table.response_labels = data.response_labels;
  table.covariates = data.covariates;
  table.covariate_names = data.covariate_names;
  table.labels = data.labels;
  table.sort_canonical();
  return table;
}

GeneratedStudy generate_study(const StudyConfig& config) {
  synth::CorpusParams corpus = config.corpus;
  corpus.master_seed = config.master_seed;

  GeneratedStudy study;
  study.plan = synth::plan_corpus(corpus);

  for (const auto& spec : study.plan.subjects) {
    study.inputs.subject_ids.push_back(spec.id);
    auto descriptors = geom::triangle_descriptors(synth::generate_body(spec.body));
    descriptors.label = spec.id;
    study.inputs.descriptors.push_back(std::move(descriptors));
  }

  StudyCache cache(study.inputs, config);
  study.lambda = cache.resolve_lambda(config.lambda);
  const ProjectionSet& ps = cache.projections(study.lambda, config.delta);

  // signal basis over the full corpus, sized by the planted coefficient vector
  const int r_signal = static_cast<int>(config.latent.b.size());
  std::vector<Index> all(study.inputs.subject_ids.size());
  std::iota(all.begin(), all.end(), Index{0});
  const bases::BasisSet signal = fold_basis(ps, all, config.signal_basis, r_signal);

  MatrixX features(study.inputs.n_subjects(), r_signal);
  for (Index k = 0; k < study.inputs.n_subjects(); ++k)
    features.row(k) =
        bases::coefficients(ps.currents[static_cast<size_t>(k)], signal, ps.ctx).values.transpose();

  const synth::ResponseSet responses =
      synth::generate_responses(study.plan, features, signal.hk_gram, config.latent);
  study.dataset = responses.dataset;
  study.true_eta = responses.true_eta;
  study.oracle_labels = responses.oracle_labels;
  study.oracle_agreement = responses.oracle_agreement;
  study.inputs.observations = table_from_dataset(responses.dataset);
  return study;
}

}  // namespace currentfit::pipeline
