#include "currentfit/config.hpp"

#include <fstream>
#include <sstream>

namespace currentfit::pipeline {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (in >> item) {
    if (!item.empty() && item.back() == ',') item.pop_back();
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Scalar parse_scalar(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const Scalar v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + value + "'");
  }
}

long parse_int(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + value + "'");
  }
}

VectorX parse_vector(const std::string& key, const std::string& value) {
  const auto items = split_list(value);
  VectorX v(static_cast<Index>(items.size()));
  for (size_t i = 0; i < items.size(); ++i) v[static_cast<Index>(i)] = parse_scalar(key, items[i]);
  return v;
}

void assign(StudyConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "study.seed") cfg.master_seed = parse_u64(key, value);
  else if (key == "study.jobs") cfg.jobs = static_cast<int>(parse_int(key, value));
  else if (key == "kernel.lambda") cfg.lambda = parse_scalar(key, value);
  else if (key == "kernel.lambda_grid") {
    cfg.lambda_grid.clear();
    for (const auto& item : split_list(value)) cfg.lambda_grid.push_back(parse_scalar(key, item));
  } else if (key == "grid.delta") cfg.delta = parse_scalar(key, value);
  else if (key == "grid.delta_sweep") {
    cfg.delta_sweep.clear();
    for (const auto& item : split_list(value)) cfg.delta_sweep.push_back(parse_scalar(key, item));
  } else if (key == "grid.domain") {
    if (value == "auto") {
      cfg.domain_auto = true;
    } else {
      const VectorX v = parse_vector(key, value);
      if (v.size() != 6) throw ConfigError("key '" + key + "': expected 'auto' or six numbers");
      cfg.domain_auto = false;
      cfg.domain_min = v.head<3>();
      cfg.domain_max = v.tail<3>();
    }
  } else if (key == "grid.ridge") cfg.ridge = parse_scalar(key, value);
  else if (key == "basis.kinds") {
    cfg.kinds.clear();
    for (const auto& item : split_list(value)) cfg.kinds.push_back(bases::basis_kind_from_string(item));
    if (cfg.kinds.empty()) throw ConfigError("key 'basis.kinds': at least one kind required");
  } else if (key == "basis.r_kernel") cfg.r_kernel = static_cast<int>(parse_int(key, value));
  else if (key == "basis.r_covariance") cfg.r_covariance = static_cast<int>(parse_int(key, value));
  else if (key == "basis.r_mixed") cfg.r_mixed = static_cast<int>(parse_int(key, value));
  else if (key == "basis.r_grid") {
    cfg.r_grid.clear();
    for (const auto& item : split_list(value)) cfg.r_grid.push_back(static_cast<int>(parse_int(key, item)));
  } else if (key == "model.type") {
    if (value == "mixed") cfg.mixed_model = true;
    else if (value == "fixed") cfg.mixed_model = false;
    else throw ConfigError("key 'model.type': expected fixed or mixed, got '" + value + "'");
  } else if (key == "model.nq") cfg.quadrature_nodes = static_cast<int>(parse_int(key, value));
  else if (key == "synth.subjects") cfg.corpus.n_subjects = static_cast<int>(parse_int(key, value));
  else if (key == "synth.resolution") cfg.corpus.resolution = static_cast<int>(parse_int(key, value));
  else if (key == "synth.deform_dims") cfg.corpus.deform_dims = static_cast<int>(parse_int(key, value));
  else if (key == "synth.deform_scale") cfg.corpus.deform_scale = parse_scalar(key, value);
  else if (key == "synth.detail_amp") cfg.corpus.detail_amp = parse_scalar(key, value);
  else if (key == "synth.alpha") cfg.latent.alpha = parse_vector(key, value);
  else if (key == "synth.beta_size") cfg.latent.beta_size = parse_scalar(key, value);
  else if (key == "synth.beta_sex") cfg.latent.beta_sex = parse_scalar(key, value);
  else if (key == "synth.beta_age") cfg.latent.beta_age = parse_scalar(key, value);
  else if (key == "synth.b") cfg.latent.b = parse_vector(key, value);
  else if (key == "synth.sigma_u") cfg.latent.sigma_u = parse_scalar(key, value);
  else if (key == "synth.signal_basis") cfg.signal_basis = bases::basis_kind_from_string(value);
  else throw ConfigError("unknown configuration key '" + key + "'");
}

void validate(const StudyConfig& cfg) {
  if (cfg.lambda < 0.0) throw ConfigError("key 'kernel.lambda': must be >= 0 (0 selects the default)");
  for (Scalar l : cfg.lambda_grid)
    if (!(l > 0.0)) throw ConfigError("key 'kernel.lambda_grid': entries must be positive");
  if (!(cfg.delta > 0.0)) throw ConfigError("key 'grid.delta': must be positive");
  for (Scalar d : cfg.delta_sweep)
    if (!(d > 0.0)) throw ConfigError("key 'grid.delta_sweep': entries must be positive");
  if (cfg.r_kernel < 1 || cfg.r_covariance < 1 || cfg.r_mixed < 1)
    throw ConfigError("key 'basis.r_*': truncation orders must be >= 1");
  for (int r : cfg.r_grid)
    if (r < 1) throw ConfigError("key 'basis.r_grid': entries must be >= 1");
  if (cfg.quadrature_nodes < 1) throw ConfigError("key 'model.nq': must be >= 1");
  if (cfg.corpus.n_subjects < 1) throw ConfigError("key 'synth.subjects': must be >= 1");
  if (cfg.corpus.resolution < 1) throw ConfigError("key 'synth.resolution': must be >= 1");
  if (cfg.corpus.deform_dims < 0 || cfg.corpus.deform_dims > 8)
    throw ConfigError("key 'synth.deform_dims': must be in [0, 8]");
  if (cfg.latent.sigma_u < 0.0) throw ConfigError("key 'synth.sigma_u': must be >= 0");
  for (Index j = 1; j < cfg.latent.alpha.size(); ++j)
    if (!(cfg.latent.alpha[j] > cfg.latent.alpha[j - 1]))
      throw ConfigError("key 'synth.alpha': thresholds must be strictly increasing");
}

std::string render_list(const std::vector<Scalar>& values) {
  std::string out;
  for (size_t i = 0; i < values.size(); ++i) out += (i ? " " : "") + format_full(values[i]);
  return out;
}

std::string render_vector(const VectorX& values) {
  std::string out;
  for (Index i = 0; i < values.size(); ++i) out += (i ? " " : "") + format_full(values[i]);
  return out;
}

}  // namespace

StudyConfig parse_study_config_text(const std::string& text, const std::string& origin) {
  StudyConfig cfg;
  cfg.latent.alpha = parse_vector("synth.alpha", "-1.1 1.1");
  cfg.latent.beta_size = -2.0;
  cfg.latent.beta_age = 2.0;
  cfg.latent.beta_sex = 0.3;
  cfg.latent.sigma_u = 0.8;
  cfg.latent.b = parse_vector("synth.b", "1.2 -0.9 0.6 -0.45 0.3");

  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = section + "." + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    assign(cfg, key, value);
  }
  validate(cfg);
  return cfg;
}

StudyConfig parse_study_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_study_config_text(buffer.str(), path);
}

void apply_override(StudyConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "': expected section.key=value");
  assign(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  validate(config);
}

std::string canonical_config_string(const StudyConfig& cfg) {
  std::ostringstream out;
  out << "study.seed = " << cfg.master_seed << "\n";
  out << "study.jobs = " << cfg.jobs << "\n";
  out << "kernel.lambda = " << format_full(cfg.lambda) << "\n";
  out << "kernel.lambda_grid = " << render_list(cfg.lambda_grid) << "\n";
  out << "grid.delta = " << format_full(cfg.delta) << "\n";
  out << "grid.delta_sweep = " << render_list(cfg.delta_sweep) << "\n";
  if (cfg.domain_auto)
    out << "grid.domain = auto\n";
  else
    out << "grid.domain = " << render_vector(cfg.domain_min) << " " << render_vector(cfg.domain_max) << "\n";
  out << "grid.ridge = " << format_full(cfg.ridge) << "\n";
  out << "basis.kinds =";
  for (auto kind : cfg.kinds) out << " " << bases::to_string(kind);
  out << "\n";
  out << "basis.r_kernel = " << cfg.r_kernel << "\n";
  out << "basis.r_covariance = " << cfg.r_covariance << "\n";
  out << "basis.r_mixed = " << cfg.r_mixed << "\n";
  out << "basis.r_grid =";
  for (int r : cfg.r_grid) out << " " << r;
  out << "\n";
  out << "model.type = " << (cfg.mixed_model ? "mixed" : "fixed") << "\n";
  out << "model.nq = " << cfg.quadrature_nodes << "\n";
  out << "synth.subjects = " << cfg.corpus.n_subjects << "\n";
  out << "synth.resolution = " << cfg.corpus.resolution << "\n";
  out << "synth.deform_dims = " << cfg.corpus.deform_dims << "\n";
  out << "synth.deform_scale = " << format_full(cfg.corpus.deform_scale) << "\n";
  out << "synth.detail_amp = " << format_full(cfg.corpus.detail_amp) << "\n";
  out << "synth.alpha = " << render_vector(cfg.latent.alpha) << "\n";
  out << "synth.beta_size = " << format_full(cfg.latent.beta_size) << "\n";
  out << "synth.beta_sex = " << format_full(cfg.latent.beta_sex) << "\n";
  out << "synth.beta_age = " << format_full(cfg.latent.beta_age) << "\n";
  out << "synth.b = " << render_vector(cfg.latent.b) << "\n";
  out << "synth.sigma_u = " << format_full(cfg.latent.sigma_u) << "\n";
  out << "synth.signal_basis = " << bases::to_string(cfg.signal_basis) << "\n";
  return out.str();
}

std::uint64_t config_hash(const StudyConfig& config) { return fnv1a(canonical_config_string(config)); }

}  // namespace currentfit::pipeline
