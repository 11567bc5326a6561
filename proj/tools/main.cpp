#include "currentfit/config.hpp"
#include "currentfit/io.hpp"
#include "currentfit/pipeline.hpp"
#include "currentfit/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>

namespace fs = std::filesystem;
using namespace currentfit;
using ordered_json = nlohmann::ordered_json;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string corpus_dir;
  std::string out_dir;
  std::vector<std::string> overrides;
  int jobs = 0;
  std::string kind;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_corpus) {
  cmd->add_option("--config", args.config_path, "study configuration file")->required();
  if (needs_corpus)
    cmd->add_option("--corpus", args.corpus_dir, "corpus directory (from gen-corpus)")->required();
  cmd->add_option("--out", args.out_dir, "output directory")->required();
  cmd->add_option("--set", args.overrides, "override a config key (section.key=value)");
  cmd->add_option("--jobs", args.jobs, "worker thread cap (0 = all cores)");
}

pipeline::StudyConfig load_config(const CommonArgs& args) {
  pipeline::StudyConfig cfg = pipeline::parse_study_config(args.config_path);
  for (const auto& assignment : args.overrides) pipeline::apply_override(cfg, assignment);
  if (args.jobs > 0) cfg.jobs = args.jobs;
  return cfg;
}

std::vector<bases::BasisKind> requested_kinds(const pipeline::StudyConfig& cfg, const CommonArgs& args) {
  if (args.kind.empty()) return cfg.kinds;
  return {bases::basis_kind_from_string(args.kind)};
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory: " + dir);
}

// Deterministic run manifest: configuration identity plus output hashes, no
// wall-clock data (timings go to the log).
void write_manifest(const std::string& out_dir, const std::string& command,
                    const pipeline::StudyConfig& cfg, const std::vector<std::string>& outputs) {
  ordered_json j;
  j["command"] = command;
  j["version"] = kVersion;
  j["config_hash"] = hex64(pipeline::config_hash(cfg));
  j["master_seed"] = cfg.master_seed;
  ordered_json files = ordered_json::array();
  for (const auto& path : outputs) {
    ordered_json e;
    e["path"] = fs::path(path).filename().string();
    e["fnv1a"] = hex64(fnv1a(io::read_file(path)));
    files.push_back(std::move(e));
  }
  j["outputs"] = std::move(files);
  j["config"] = pipeline::canonical_config_string(cfg);
  io::atomic_write(out_dir + "/manifest_" + command + ".json", j.dump(2) + "\n");
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  long ms() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
        .count();
  }
};

// ---- corpus directory layout ------------------------------------------------

std::string subjects_tsv(const pipeline::GeneratedStudy& study, const std::string& mesh_dir) {
  std::string out = "subject\tmesh\tsex\tage\theight\tgirth\tseed\n";
  for (const auto& s : study.plan.subjects) {
    out += s.id + "\t" + mesh_dir + "/" + s.id + ".off\t" + std::to_string(s.body.sex) + "\t" +
           format_full(s.body.age) + "\t" + format_full(s.body.height) + "\t" +
           format_full(s.body.girth) + "\t" + std::to_string(s.body.seed) + "\n";
  }
  return out;
}

std::string oracle_tsv(const pipeline::GeneratedStudy& study) {
  std::string out = "row\tsubject\tshirt.size\tresponse\ttrue_eta\toracle_pred\n";
  const auto& d = study.dataset;
  for (Index i = 0; i < d.rows(); ++i) {
    out += std::to_string(i) + "\t" + d.subjects[static_cast<size_t>(i)] + "\t" +
           format_full(d.covariates(i, 0)) + "\t" +
           std::to_string(d.response_labels[static_cast<size_t>(i)]) + "\t" +
           format_full(study.true_eta[i]) + "\t" +
           std::to_string(study.oracle_labels[static_cast<size_t>(i)]) + "\n";
  }
  return out;
}

pipeline::StudyInputs load_corpus(const std::string& corpus_dir) {
  const std::string table = io::read_file(corpus_dir + "/subjects.tsv");
  pipeline::StudyInputs inputs;
  std::istringstream in(table);
  std::string line;
  std::getline(in, line);  // header
  struct Row {
    std::string id, mesh;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream cells(line);
    Row row;
    std::getline(cells, row.id, '\t');
    std::getline(cells, row.mesh, '\t');
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("no subjects listed in " + corpus_dir + "/subjects.tsv");
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.id < b.id; });
  for (const auto& row : rows) {
    const std::string path = corpus_dir + "/" + row.mesh;
    auto mesh = geom::load_mesh(path, geom::format_from_path(path));
    auto descriptors = geom::triangle_descriptors(mesh);
    if (descriptors.degenerate_count > 0)
      std::cerr << "warning: " << row.id << ": " << descriptors.degenerate_count
                << " degenerate triangles (zero area vector)\n";
    descriptors.label = row.id;
    inputs.subject_ids.push_back(row.id);
    inputs.descriptors.push_back(std::move(descriptors));
  }
  inputs.observations = io::read_observations(corpus_dir + "/observations.tsv");
  return inputs;
}

// Loads out/currents/*.crnt when every subject's file matches the grid and
// bandwidth; otherwise projects from scratch (and persists when out_dir set).
pipeline::ProjectionSet obtain_projections(const pipeline::StudyInputs& inputs,
                                           const pipeline::StudyConfig& cfg, Scalar lambda,
                                           const std::string& out_dir, bool persist,
                                           std::vector<std::string>* outputs) {
  pipeline::ProjectionSet ps = [&] {
    // Build grid/context once to know the hash we expect on disk.
    pipeline::ProjectionSet fresh;
    Vec3 lo = cfg.domain_min, hi = cfg.domain_max;
    if (cfg.domain_auto) std::tie(lo, hi) = pipeline::corpus_bounding_box(inputs);
    auto grid = std::make_shared<const rkhs::Grid>(rkhs::build_grid(lo, hi, cfg.delta));
    fresh.ctx = rkhs::make_context(grid, rkhs::KernelSpec{lambda});
    return fresh;
  }();

  const std::string dir = out_dir + "/currents";
  bool all_cached = !dir.empty();
  for (const auto& id : inputs.subject_ids)
    if (!fs::exists(dir + "/" + id + ".crnt")) {
      all_cached = false;
      break;
    }
  if (all_cached) {
    try {
      for (size_t k = 0; k < inputs.subject_ids.size(); ++k) {
        auto repr = io::read_current(dir + "/" + inputs.subject_ids[k] + ".crnt", ps.ctx.grid);
        if (repr.kernel.lambda != lambda || repr.label != inputs.subject_ids[k])
          throw DataError("stale current artifact");
        ps.currents.push_back(std::move(repr));
      }
      std::cerr << "reusing " << ps.currents.size() << " projected currents from " << dir << "\n";
      return ps;
    } catch (const DataError&) {
      ps.currents.clear();  // stale cache: recompute
    }
  }

  const int jobs = cfg.jobs > 0 ? cfg.jobs : default_jobs();
  ps.currents.resize(inputs.descriptors.size());
  parallel_for(static_cast<Index>(inputs.descriptors.size()), jobs, [&](Index k) {
    const auto raw = rkhs::current_from_mesh(inputs.descriptors[static_cast<size_t>(k)],
                                             ps.ctx.kernel, inputs.subject_ids[static_cast<size_t>(k)]);
    ps.currents[static_cast<size_t>(k)] =
        rkhs::project_to_grid(raw, ps.ctx.grid, ps.ctx.kernel_gram, cfg.ridge);
  });
  if (persist) {
    ensure_dir(dir);
    for (const auto& repr : ps.currents) {
      const std::string path = dir + "/" + repr.label + ".crnt";
      io::write_current(repr, path);
      if (outputs) outputs->push_back(path);
    }
  }
  return ps;
}

bases::BasisSet corpus_basis(const pipeline::ProjectionSet& ps, bases::BasisKind kind, int r) {
  std::vector<Index> all(ps.currents.size());
  std::iota(all.begin(), all.end(), Index{0});
  return pipeline::fold_basis(ps, all, kind, r);
}

std::string basis_path(const std::string& out_dir, bases::BasisKind kind) {
  return out_dir + "/basis_" + bases::to_string(kind) + ".basis";
}

bases::BasisSet obtain_basis(const pipeline::ProjectionSet& ps, bases::BasisKind kind, int r,
                             const std::string& out_dir, std::vector<std::string>* outputs) {
  const std::string path = basis_path(out_dir, kind);
  if (fs::exists(path)) {
    try {
      auto basis = io::read_basis(path);
      if (basis.kind == kind && basis.r == r && basis.grid_hash == ps.ctx.grid->hash() &&
          basis.lambda == ps.ctx.kernel.lambda) {
        std::cerr << "reusing basis artifact " << path << "\n";
        return basis;
      }
    } catch (const DataError&) {
    }
  }
  auto basis = corpus_basis(ps, kind, r);
  io::write_basis(basis, path);
  if (outputs) outputs->push_back(path);
  return basis;
}

// ---- subcommands --------------------------------------------------------------

int cmd_gen_corpus(const CommonArgs& args) {
  Timer timer;
  const auto cfg = load_config(args);
  const auto study = pipeline::generate_study(cfg);
  ensure_dir(args.out_dir);
  ensure_dir(args.out_dir + "/meshes");
  std::vector<std::string> outputs;
  for (const auto& spec : study.plan.subjects) {
    const std::string path = args.out_dir + "/meshes/" + spec.id + ".off";
    geom::save_off(synth::generate_body(spec.body), path);
    outputs.push_back(path);
  }
  const std::string subjects_path = args.out_dir + "/subjects.tsv";
  io::atomic_write(subjects_path, subjects_tsv(study, "meshes"));
  outputs.push_back(subjects_path);
  const std::string obs_path = args.out_dir + "/observations.tsv";
  io::atomic_write(obs_path, io::serialize_observations(study.inputs.observations));
  outputs.push_back(obs_path);
  const std::string oracle_path = args.out_dir + "/oracle.tsv";
  io::atomic_write(oracle_path, oracle_tsv(study));
  outputs.push_back(oracle_path);

  ordered_json corpus;
  corpus["version"] = kVersion;
  corpus["config_hash"] = hex64(pipeline::config_hash(cfg));
  corpus["master_seed"] = cfg.master_seed;
  corpus["subjects"] = study.plan.subjects.size();
  corpus["observations"] = study.dataset.rows();
  corpus["labels"] = study.plan.labels;
  corpus["signal_basis"] = bases::to_string(cfg.signal_basis);
  corpus["lambda_used"] = study.lambda;
  corpus["oracle_agreement_pct"] = study.oracle_agreement;
  const std::string corpus_path = args.out_dir + "/corpus.json";
  io::atomic_write(corpus_path, corpus.dump(2) + "\n");
  outputs.push_back(corpus_path);

  write_manifest(args.out_dir, "gen-corpus", cfg, outputs);
  std::cerr << "generated " << study.plan.subjects.size() << " subjects, " << study.dataset.rows()
            << " observations (oracle agreement " << study.oracle_agreement << "%) in " << timer.ms()
            << " ms\n";
  return 0;
}

int cmd_project(const CommonArgs& args) {
  Timer timer;
  const auto cfg = load_config(args);
  const auto inputs = load_corpus(args.corpus_dir);
  ensure_dir(args.out_dir);
  pipeline::StudyCache cache(inputs, cfg);
  const Scalar lambda = cache.resolve_lambda(cfg.lambda);
  std::vector<std::string> outputs;
  const auto ps = obtain_projections(inputs, cfg, lambda, args.out_dir, true, &outputs);
  Scalar max_residual = 0.0;
  for (const auto& c : ps.currents) max_residual = std::max(max_residual, c.residual);
  write_manifest(args.out_dir, "project", cfg, outputs);
  std::cerr << "projected " << ps.currents.size() << " currents onto " << ps.ctx.grid_size()
            << " grid points (lambda " << lambda << ", max residual " << max_residual << ") in "
            << timer.ms() << " ms\n";
  return 0;
}

int cmd_basis(const CommonArgs& args) {
  Timer timer;
  const auto cfg = load_config(args);
  const auto inputs = load_corpus(args.corpus_dir);
  ensure_dir(args.out_dir);
  pipeline::StudyCache cache(inputs, cfg);
  const Scalar lambda = cache.resolve_lambda(cfg.lambda);
  std::vector<std::string> outputs;
  const auto ps = obtain_projections(inputs, cfg, lambda, args.out_dir, true, &outputs);
  for (const auto kind : requested_kinds(cfg, args)) {
    obtain_basis(ps, kind, cfg.r_for(kind), args.out_dir, &outputs);
    std::cerr << "built " << bases::to_string(kind) << " basis (r = " << cfg.r_for(kind) << ")\n";
  }
  write_manifest(args.out_dir, "basis", cfg, outputs);
  std::cerr << "basis stage finished in " << timer.ms() << " ms\n";
  return 0;
}

int cmd_features(const CommonArgs& args) {
  Timer timer;
  const auto cfg = load_config(args);
  const auto inputs = load_corpus(args.corpus_dir);
  ensure_dir(args.out_dir);
  pipeline::StudyCache cache(inputs, cfg);
  const Scalar lambda = cache.resolve_lambda(cfg.lambda);
  std::vector<std::string> outputs;
  const auto ps = obtain_projections(inputs, cfg, lambda, args.out_dir, true, &outputs);
  for (const auto kind : requested_kinds(cfg, args)) {
    const auto basis = obtain_basis(ps, kind, cfg.r_for(kind), args.out_dir, &outputs);
    const auto dataset = pipeline::assemble_features(ps.currents, basis, inputs.observations, ps.ctx);
    const std::string path = args.out_dir + "/dataset_" + bases::to_string(kind) + ".tsv";
    io::write_dataset(dataset, path);
    outputs.push_back(path);
  }
  write_manifest(args.out_dir, "features", cfg, outputs);
  std::cerr << "feature stage finished in " << timer.ms() << " ms\n";
  return 0;
}

int cmd_fit(const CommonArgs& args) {
  Timer timer;
  const auto cfg = load_config(args);
  ensure_dir(args.out_dir);
  std::vector<std::string> outputs;
  // consumes the features stage; rebuilds it if needed
  for (const auto kind : requested_kinds(cfg, args)) {
    const std::string dataset_path = args.out_dir + "/dataset_" + bases::to_string(kind) + ".tsv";
    bases::BasisSet basis;
    ordinal::OrdinalDataset dataset;
    if (fs::exists(dataset_path) && fs::exists(basis_path(args.out_dir, kind))) {
      dataset = io::read_dataset(dataset_path);
      basis = io::read_basis(basis_path(args.out_dir, kind));
      std::cerr << "reusing dataset artifact " << dataset_path << "\n";
    } else {
      const auto inputs = load_corpus(args.corpus_dir);
      pipeline::StudyCache cache(inputs, cfg);
      const Scalar lambda = cache.resolve_lambda(cfg.lambda);
      const auto ps = obtain_projections(inputs, cfg, lambda, args.out_dir, true, &outputs);
      basis = obtain_basis(ps, kind, cfg.r_for(kind), args.out_dir, &outputs);
      dataset = pipeline::assemble_features(ps.currents, basis, inputs.observations, ps.ctx);
      io::write_dataset(dataset, dataset_path);
      outputs.push_back(dataset_path);
    }
    ordinal::FitOptions options;
    options.quadrature_nodes = cfg.quadrature_nodes;
    const auto model = cfg.mixed_model ? ordinal::fit_mixed(dataset, basis.hk_gram, options)
                                       : ordinal::fit_fixed(dataset, basis.hk_gram, options);
    if (!model.fit.converged && !model.fit.separated)
      throw NumericalError("model fit did not converge for kind " + bases::to_string(kind));
    const std::string path = args.out_dir + "/model_" + bases::to_string(kind) + ".json";
    io::atomic_write(path, io::model_report_json(model));
    outputs.push_back(path);
    std::cerr << "fitted " << bases::to_string(kind) << " model: loglik " << model.fit.loglik << "\n";
  }
  write_manifest(args.out_dir, "fit", cfg, outputs);
  std::cerr << "fit stage finished in " << timer.ms() << " ms\n";
  return 0;
}

int cmd_cv(const CommonArgs& args) {
  Timer timer;
  const auto cfg = load_config(args);
  const auto inputs = load_corpus(args.corpus_dir);
  ensure_dir(args.out_dir);
  pipeline::StudyCache cache(inputs, cfg);
  const Scalar lambda = cache.resolve_lambda(cfg.lambda);
  std::vector<std::string> outputs;
  if (cfg.lambda_grid.empty()) {
    auto ps = obtain_projections(inputs, cfg, lambda, args.out_dir, true, &outputs);
    cache.seed_projections(lambda, cfg.delta, std::move(ps));
  }

  std::vector<Scalar> deltas = {cfg.delta};
  for (Scalar d : cfg.delta_sweep)
    if (d != cfg.delta) deltas.push_back(d);

  std::string sweep = "delta";
  for (const auto kind : requested_kinds(cfg, args)) sweep += "\t" + bases::to_string(kind);
  sweep += "\n";
  for (Scalar delta : deltas) {
    char short_delta[32];
    std::snprintf(short_delta, sizeof(short_delta), "%g", delta);
    sweep += short_delta;
    for (const auto kind : requested_kinds(cfg, args)) {
      auto report = pipeline::loso_cv(inputs, cfg, kind, cache, delta);
      report.config_echo = hex64(pipeline::config_hash(cfg));
      std::string suffix = bases::to_string(kind);
      if (delta != cfg.delta) {
        char short_delta[32];
        std::snprintf(short_delta, sizeof(short_delta), "%g", delta);
        suffix += std::string("_delta") + short_delta;
      }
      const std::string json_path = args.out_dir + "/cv_" + suffix + ".json";
      io::atomic_write(json_path, io::cv_report_json(report));
      outputs.push_back(json_path);
      const std::string text_path = args.out_dir + "/cv_" + suffix + ".txt";
      io::atomic_write(text_path, io::cv_report_text(report));
      outputs.push_back(text_path);
      char pct[16];
      std::snprintf(pct, sizeof(pct), "%.2f", report.agreement_pct);
      sweep += std::string("\t") + pct;
      std::cerr << "cv " << suffix << ": agreement " << pct << "% over " << report.total << " rows\n";
    }
    sweep += "\n";
  }
  const std::string sweep_path = args.out_dir + "/cv_sweep.tsv";
  io::atomic_write(sweep_path, sweep);
  outputs.push_back(sweep_path);
  write_manifest(args.out_dir, "cv", cfg, outputs);
  std::cerr << "cross-validation finished in " << timer.ms() << " ms\n";
  return 0;
}

int cmd_report(const std::string& input, const std::string& out_path) {
  const auto report = io::parse_cv_report_json(io::read_file(input));
  // recompute the table from the stored predictions and cross-check
  if (!report.predictions.empty()) {
    std::vector<int> pred, truth;
    for (const auto& p : report.predictions) {
      pred.push_back(p.predicted_label);
      truth.push_back(p.truth_label);
    }
    const auto check = pipeline::agreement_table(pred, truth, report.labels);
    if (check.confusion != report.confusion || check.agreement_pct != report.agreement_pct)
      throw DataError("stored confusion table disagrees with the stored predictions: " + input);
  }
  const std::string text = io::cv_report_text(report);
  if (out_path.empty())
    std::cout << text;
  else
    io::atomic_write(out_path, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"currents-based shape regression toolkit"};
  app.require_subcommand(1);

  CommonArgs gen_args, project_args, basis_args, features_args, fit_args, cv_args;
  std::string report_input, report_out;

  auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic mesh corpus with responses");
  add_common(gen, gen_args, false);

  auto* project = app.add_subcommand("project", "project corpus meshes onto the evaluation grid");
  add_common(project, project_args, true);

  auto* basis = app.add_subcommand("basis", "build truncated bases over the corpus");
  add_common(basis, basis_args, true);
  basis->add_option("--kind", basis_args.kind, "basis kind (kernel|covariance|mixed)");

  auto* features = app.add_subcommand("features", "assemble ordinal datasets from currents");
  add_common(features, features_args, true);
  features->add_option("--kind", features_args.kind, "basis kind (kernel|covariance|mixed)");

  auto* fit = app.add_subcommand("fit", "fit the ordinal model on assembled features");
  add_common(fit, fit_args, true);
  fit->add_option("--kind", fit_args.kind, "basis kind (kernel|covariance|mixed)");

  auto* cv = app.add_subcommand("cv", "leave-one-subject-out cross-validation study");
  add_common(cv, cv_args, true);
  cv->add_option("--kind", cv_args.kind, "basis kind (kernel|covariance|mixed)");

  auto* report = app.add_subcommand("report", "re-render an agreement table from a cv report");
  report->add_option("--input", report_input, "cv report json")->required();
  report->add_option("--out", report_out, "write the table here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_corpus(gen_args);
    if (project->parsed()) return cmd_project(project_args);
    if (basis->parsed()) return cmd_basis(basis_args);
    if (features->parsed()) return cmd_features(features_args);
    if (fit->parsed()) return cmd_fit(fit_args);
    if (cv->parsed()) return cmd_cv(cv_args);
    if (report->parsed()) return cmd_report(report_input, report_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
