#include "currentfit/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace currentfit::io {

namespace {

using ordered_json = nlohmann::ordered_json;

[[noreturn]] void bad_artifact(const std::string& what) { throw DataError("artifact parse: " + what); }

struct TokenReader {
  std::istringstream in;
  explicit TokenReader(const std::string& text) : in(text) {}

  std::string word() {
    std::string w;
    if (!(in >> w)) bad_artifact("unexpected end of file");
    return w;
  }

  std::string rest_of_line() {
    std::string s;
    std::getline(in, s);
    const auto first = s.find_first_not_of(" \t\r");
    return first == std::string::npos ? "" : s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
  }

  void expect(const std::string& token) {
    const std::string w = word();
    if (w != token) bad_artifact("expected '" + token + "', got '" + w + "'");
  }

  double number() {
    double v;
    if (!(in >> v)) bad_artifact("expected a number");
    return v;
  }

  long integer() {
    long v;
    if (!(in >> v)) bad_artifact("expected an integer");
    return v;
  }

  std::uint64_t hex() {
    std::string w = word();
    return std::stoull(w, nullptr, 16);
  }
};

void append_field(std::string& out, const FieldMatrix& field) {
  for (Index i = 0; i < field.rows(); ++i) {
    out += format_full(field(i, 0));
    out += ' ';
    out += format_full(field(i, 1));
    out += ' ';
    out += format_full(field(i, 2));
    out += '\n';
  }
}

FieldMatrix read_field(TokenReader& reader, Index rows) {
  FieldMatrix field(rows, 3);
  for (Index i = 0; i < rows; ++i)
    for (int d = 0; d < 3; ++d) field(i, d) = reader.number();
  return field;
}

ordered_json json_vector(const VectorX& v) {
  ordered_json arr = ordered_json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

ordered_json json_matrix(const MatrixX& m) {
  ordered_json rows = ordered_json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void atomic_write(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write file: " + tmp);
    out << content;
    if (!out) throw DataError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// ---- currents ---------------------------------------------------------------

std::string serialize_current(const rkhs::CurrentRepr& repr) {
  std::string out = "currentfit-current 1\n";
  out += "grid_hash " + hex64(repr.grid->hash()) + "\n";
  out += "lambda " + format_full(repr.kernel.lambda) + "\n";
  out += "ridge " + format_full(repr.ridge) + "\n";
  out += "residual " + format_full(repr.residual) + "\n";
  out += "label " + repr.label + "\n";
  out += "n " + std::to_string(repr.grid->size()) + "\n";
  out.reserve(out.size() + static_cast<size_t>(repr.grid->size()) * 160);
  for (Index i = 0; i < repr.grid->size(); ++i) {
    for (int d = 0; d < 3; ++d) out += format_full(repr.grid->points(i, d)) + " ";
    out += format_full(repr.beta(i, 0)) + " " + format_full(repr.beta(i, 1)) + " " +
           format_full(repr.beta(i, 2)) + "\n";
  }
  return out;
}

rkhs::CurrentRepr parse_current(const std::string& text, std::shared_ptr<const rkhs::Grid> grid) {
  TokenReader reader(text);
  reader.expect("currentfit-current");
  if (reader.integer() != 1) bad_artifact("unsupported current version");
  reader.expect("grid_hash");
  const std::uint64_t hash = reader.hex();
  if (hash != grid->hash()) bad_artifact("current was projected on a different grid");
  rkhs::CurrentRepr repr;
  reader.expect("lambda");
  repr.kernel.lambda = reader.number();
  reader.expect("ridge");
  repr.ridge = reader.number();
  reader.expect("residual");
  repr.residual = reader.number();
  reader.expect("label");
  repr.label = reader.rest_of_line();
  reader.expect("n");
  const Index n = reader.integer();
  if (n != grid->size()) bad_artifact("current row count does not match the grid");
  repr.beta.resize(n, 3);
  for (Index i = 0; i < n; ++i) {
    for (int d = 0; d < 3; ++d) {
      const Scalar coord = reader.number();
      if (coord != grid->points(i, d)) bad_artifact("grid point mismatch in current file");
    }
    for (int d = 0; d < 3; ++d) repr.beta(i, d) = reader.number();
  }
  repr.grid = std::move(grid);
  return repr;
}

void write_current(const rkhs::CurrentRepr& repr, const std::string& path) {
  atomic_write(path, serialize_current(repr));
}

rkhs::CurrentRepr read_current(const std::string& path, std::shared_ptr<const rkhs::Grid> grid) {
  return parse_current(read_file(path), std::move(grid));
}

// ---- bases -------------------------------------------------------------------

std::string serialize_basis(const bases::BasisSet& basis) {
  const Index n = basis.grid_size();
  std::string out = "currentfit-basis 1\n";
  out += "kind " + bases::to_string(basis.kind) + "\n";
  out += "r " + std::to_string(basis.r) + "\n";
  out += "grid_hash " + hex64(basis.grid_hash) + "\n";
  out += "lambda " + format_full(basis.lambda) + "\n";
  out += "weight " + format_full(basis.weight) + "\n";
  out += "n " + std::to_string(n) + "\n";
  out += "hk_gram_truncated " + std::to_string(basis.hk_gram_truncated ? 1 : 0) + "\n";
  out += "eigenvalues";
  for (Index i = 0; i < basis.spectrum.eigenvalues.size(); ++i)
    out += " " + format_full(basis.spectrum.eigenvalues[i]);
  out += "\nhk_gram\n";
  for (Index i = 0; i < basis.hk_gram.rows(); ++i) {
    for (Index j = 0; j < basis.hk_gram.cols(); ++j)
      out += (j ? " " : "") + format_full(basis.hk_gram(i, j));
    out += "\n";
  }
  out += "sample_mean\n";
  append_field(out, basis.sample_mean);
  out += "elements " + std::to_string(basis.elements.size()) + "\n";
  for (const auto& e : basis.elements) append_field(out, e);
  out += "coef_fields " + std::to_string(basis.coef_fields.size()) + "\n";
  for (const auto& e : basis.coef_fields) append_field(out, e);
  return out;
}

bases::BasisSet parse_basis(const std::string& text) {
  TokenReader reader(text);
  reader.expect("currentfit-basis");
  if (reader.integer() != 1) bad_artifact("unsupported basis version");
  bases::BasisSet basis;
  reader.expect("kind");
  basis.kind = bases::basis_kind_from_string(reader.word());
  reader.expect("r");
  basis.r = static_cast<int>(reader.integer());
  reader.expect("grid_hash");
  basis.grid_hash = reader.hex();
  reader.expect("lambda");
  basis.lambda = reader.number();
  reader.expect("weight");
  basis.weight = reader.number();
  reader.expect("n");
  const Index n = reader.integer();
  reader.expect("hk_gram_truncated");
  basis.hk_gram_truncated = reader.integer() != 0;
  reader.expect("eigenvalues");
  basis.spectrum.eigenvalues.resize(basis.r);
  for (int i = 0; i < basis.r; ++i) basis.spectrum.eigenvalues[i] = reader.number();
  basis.spectrum.numerical_rank = basis.r;
  reader.expect("hk_gram");
  basis.hk_gram.resize(basis.r, basis.r);
  for (int i = 0; i < basis.r; ++i)
    for (int j = 0; j < basis.r; ++j) basis.hk_gram(i, j) = reader.number();
  reader.expect("sample_mean");
  basis.sample_mean = read_field(reader, n);
  reader.expect("elements");
  const long n_elem = reader.integer();
  for (long i = 0; i < n_elem; ++i) basis.elements.push_back(read_field(reader, n));
  reader.expect("coef_fields");
  const long n_coef = reader.integer();
  for (long i = 0; i < n_coef; ++i) basis.coef_fields.push_back(read_field(reader, n));
  return basis;
}

void write_basis(const bases::BasisSet& basis, const std::string& path) {
  atomic_write(path, serialize_basis(basis));
}

bases::BasisSet read_basis(const std::string& path) { return parse_basis(read_file(path)); }

// ---- datasets -----------------------------------------------------------------

std::string serialize_dataset(const ordinal::OrdinalDataset& data) {
  std::string out = "subject\tresponse";
  for (const auto& name : data.covariate_names) out += "\t" + name;
  for (Index j = 0; j < data.features.cols(); ++j) out += "\tz_" + std::to_string(j + 1);
  out += "\n";
  for (Index i = 0; i < data.rows(); ++i) {
    out += data.subjects[static_cast<size_t>(i)] + "\t" +
           std::to_string(data.response_labels[static_cast<size_t>(i)]);
    for (Index c = 0; c < data.covariates.cols(); ++c) out += "\t" + format_full(data.covariates(i, c));
    for (Index c = 0; c < data.features.cols(); ++c) out += "\t" + format_full(data.features(i, c));
    out += "\n";
  }
  return out;
}

namespace {

std::vector<std::vector<std::string>> parse_tsv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    size_t start = 0;
    for (;;) {
      const size_t tab = line.find('\t', start);
      cells.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::vector<int> sorted_unique_labels(const std::vector<int>& responses) {
  std::vector<int> labels = responses;
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

}  // namespace

ordinal::OrdinalDataset parse_dataset(const std::string& text) {
  const auto rows = parse_tsv(text);
  if (rows.empty()) bad_artifact("empty dataset file");
  const auto& header = rows[0];
  if (header.size() < 2 || header[0] != "subject" || header[1] != "response")
    bad_artifact("dataset header must start with subject\tresponse");
  Index first_z = static_cast<Index>(header.size());
  for (size_t c = 2; c < header.size(); ++c)
    if (header[c].rfind("z_", 0) == 0) {
      first_z = static_cast<Index>(c);
      break;
    }
  ordinal::OrdinalDataset data;
  for (Index c = 2; c < first_z; ++c) data.covariate_names.push_back(header[static_cast<size_t>(c)]);
  const Index n = static_cast<Index>(rows.size()) - 1;
  const Index m = first_z - 2;
  const Index r = static_cast<Index>(header.size()) - first_z;
  data.covariates.resize(n, m);
  data.features.resize(n, r);
  for (Index i = 0; i < n; ++i) {
    const auto& cells = rows[static_cast<size_t>(i + 1)];
    if (static_cast<Index>(cells.size()) != 2 + m + r) bad_artifact("dataset row has the wrong cell count");
    data.subjects.push_back(cells[0]);
    data.response_labels.push_back(std::stoi(cells[1]));
    for (Index c = 0; c < m; ++c) data.covariates(i, c) = std::stod(cells[static_cast<size_t>(2 + c)]);
    for (Index c = 0; c < r; ++c) data.features(i, c) = std::stod(cells[static_cast<size_t>(2 + m + c)]);
  }
  data.labels = sorted_unique_labels(data.response_labels);
  return data;
}

void write_dataset(const ordinal::OrdinalDataset& data, const std::string& path) {
  atomic_write(path, serialize_dataset(data));
}

ordinal::OrdinalDataset read_dataset(const std::string& path) { return parse_dataset(read_file(path)); }

// ---- observation tables --------------------------------------------------------

std::string serialize_observations(const pipeline::CovariateTable& table) {
  std::string out = "subject\tresponse";
  for (const auto& name : table.covariate_names) out += "\t" + name;
  out += "\n";
  for (Index i = 0; i < table.rows(); ++i) {
    out += table.subjects[static_cast<size_t>(i)] + "\t" +
           std::to_string(table.response_labels[static_cast<size_t>(i)]);
    for (Index c = 0; c < table.covariates.cols(); ++c) out += "\t" + format_full(table.covariates(i, c));
    out += "\n";
  }
  return out;
}

pipeline::CovariateTable parse_observations(const std::string& text) {
  const auto rows = parse_tsv(text);
  if (rows.empty()) bad_artifact("empty observations file");
  const auto& header = rows[0];
  if (header.size() < 2 || header[0] != "subject" || header[1] != "response")
    bad_artifact("observations header must start with subject\tresponse");
  pipeline::CovariateTable table;
  for (size_t c = 2; c < header.size(); ++c) table.covariate_names.push_back(header[c]);
  const Index n = static_cast<Index>(rows.size()) - 1;
  const Index m = static_cast<Index>(header.size()) - 2;
  table.covariates.resize(n, m);
  for (Index i = 0; i < n; ++i) {
    const auto& cells = rows[static_cast<size_t>(i + 1)];
    if (static_cast<Index>(cells.size()) != 2 + m) bad_artifact("observation row has the wrong cell count");
    table.subjects.push_back(cells[0]);
    table.response_labels.push_back(std::stoi(cells[1]));
    for (Index c = 0; c < m; ++c) table.covariates(i, c) = std::stod(cells[static_cast<size_t>(2 + c)]);
  }
  table.labels = sorted_unique_labels(table.response_labels);
  table.sort_canonical();
  return table;
}

pipeline::CovariateTable read_observations(const std::string& path) {
  return parse_observations(read_file(path));
}

// ---- reports --------------------------------------------------------------------

std::string model_report_json(const ordinal::OrdinalModel& model) {
  ordered_json j;
  j["model"] = model.has_random_intercept ? "cumulative-logit-mixed" : "cumulative-logit";
  j["labels"] = model.labels;
  j["thresholds"] = json_vector(model.thresholds);
  j["covariate_names"] = model.covariate_names;
  j["scalar_coefs"] = json_vector(model.scalar_coefs);
  j["functional_coefs"] = json_vector(model.functional_coefs);
  if (model.has_random_intercept) j["sigma_u"] = model.random_intercept_sd;
  j["hk_gram"] = json_matrix(model.hk_gram);
  ordered_json fit;
  fit["loglik"] = model.fit.loglik;
  fit["iterations"] = model.fit.iterations;
  fit["converged"] = model.fit.converged;
  fit["separated"] = model.fit.separated;
  fit["sigma_boundary"] = model.fit.sigma_boundary;
  if (model.fit.std_errors.size() > 0) {
    ordered_json se = ordered_json::array();
    for (Index i = 0; i < model.fit.std_errors.size(); ++i) {
      const Scalar v = model.fit.std_errors[i];
      if (std::isfinite(v))
        se.push_back(v);
      else
        se.push_back(nullptr);
    }
    fit["std_errors"] = std::move(se);
  }
  if (!model.fit.note.empty()) fit["note"] = model.fit.note;
  j["fit"] = std::move(fit);
  return j.dump(2) + "\n";
}

std::string cv_report_json(const pipeline::CVReport& report) {
  ordered_json j;
  j["kind"] = report.kind;
  j["lambda"] = report.lambda;
  j["delta"] = report.delta;
  j["r"] = report.r;
  j["labels"] = report.labels;
  ordered_json confusion = ordered_json::array();
  for (Index i = 0; i < report.confusion.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Index jl = 0; jl < report.confusion.cols(); ++jl) row.push_back(report.confusion(i, jl));
    confusion.push_back(std::move(row));
  }
  j["confusion"] = std::move(confusion);
  j["agreement_pct"] = report.agreement_pct;
  j["total"] = report.total;
  j["skipped_rows"] = report.skipped_rows;
  j["skipped_subjects"] = report.skipped_subjects;
  ordered_json preds = ordered_json::array();
  for (const auto& p : report.predictions) {
    ordered_json e;
    e["subject"] = p.subject;
    e["row"] = p.observation_row;
    e["truth"] = p.truth_label;
    e["prediction"] = p.predicted_label;
    preds.push_back(std::move(e));
  }
  j["predictions"] = std::move(preds);
  if (!report.config_echo.empty()) j["config"] = report.config_echo;
  return j.dump(2) + "\n";
}

pipeline::CVReport parse_cv_report_json(const std::string& text) {
  const auto j = ordered_json::parse(text);
  pipeline::CVReport report;
  report.kind = j.value("kind", "");
  report.lambda = j.value("lambda", 0.0);
  report.delta = j.value("delta", 0.0);
  report.r = j.value("r", 0);
  report.labels = j.at("labels").get<std::vector<int>>();
  const auto& confusion = j.at("confusion");
  const Index n = static_cast<Index>(confusion.size());
  report.confusion.resize(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index c = 0; c < n; ++c) report.confusion(i, c) = confusion[i][c].get<int>();
  report.agreement_pct = j.at("agreement_pct").get<Scalar>();
  report.total = j.at("total").get<Index>();
  report.skipped_rows = j.value("skipped_rows", 0);
  if (j.contains("skipped_subjects"))
    report.skipped_subjects = j.at("skipped_subjects").get<std::vector<std::string>>();
  if (j.contains("predictions"))
    for (const auto& e : j.at("predictions")) {
      pipeline::FoldPrediction p;
      p.subject = e.at("subject").get<std::string>();
      p.observation_row = e.at("row").get<Index>();
      p.truth_label = e.at("truth").get<int>();
      p.predicted_label = e.at("prediction").get<int>();
      report.predictions.push_back(std::move(p));
    }
  return report;
}

std::string cv_report_text(const pipeline::CVReport& report) {
  std::ostringstream out;
  out << "Cross-validation report (" << report.kind << " basis)\n";
  out << "lambda = " << report.lambda << ", delta = " << report.delta << ", r = ";
  if (report.r < 0)
    out << "selected per fold";
  else
    out << report.r;
  out << "\n\n";
  out << "                      Prediction\n";
  out << "                 ";
  for (int lbl : report.labels) out << "\t" << lbl;
  out << "\n";
  for (Index i = 0; i < report.confusion.rows(); ++i) {
    out << (i == 0 ? "Expert decision " : "                ") << report.labels[static_cast<size_t>(i)];
    for (Index c = 0; c < report.confusion.cols(); ++c) out << "\t" << report.confusion(i, c);
    out << "\n";
  }
  char pct[16];
  std::snprintf(pct, sizeof(pct), "%.2f", report.agreement_pct);
  out << "\n% of agreement: " << pct << "%\n";
  out << "predicted rows: " << report.total << ", skipped rows: " << report.skipped_rows << "\n";
  for (const auto& s : report.skipped_subjects) out << "skipped subject: " << s << "\n";
  return out.str();
}

}  // namespace currentfit::io
