#pragma once

#include "currentfit/basis.hpp"
#include "currentfit/ordinal.hpp"
#include "currentfit/pipeline.hpp"

#include <string>

namespace currentfit::io {

/// Writes content to a temporary file in the same directory and renames it
/// into place, so partially written artifacts are never observed.
void atomic_write(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

// ---- grid-anchored currents (.crnt, text, bit-exact round-trip) -----------

std::string serialize_current(const rkhs::CurrentRepr& repr);
rkhs::CurrentRepr parse_current(const std::string& text, std::shared_ptr<const rkhs::Grid> grid);
void write_current(const rkhs::CurrentRepr& repr, const std::string& path);
rkhs::CurrentRepr read_current(const std::string& path, std::shared_ptr<const rkhs::Grid> grid);

// ---- basis sets (.basis) ---------------------------------------------------

std::string serialize_basis(const bases::BasisSet& basis);
bases::BasisSet parse_basis(const std::string& text);
void write_basis(const bases::BasisSet& basis, const std::string& path);
bases::BasisSet read_basis(const std::string& path);

// ---- ordinal datasets (.tsv) ------------------------------------------------

std::string serialize_dataset(const ordinal::OrdinalDataset& data);
ordinal::OrdinalDataset parse_dataset(const std::string& text);
void write_dataset(const ordinal::OrdinalDataset& data, const std::string& path);
ordinal::OrdinalDataset read_dataset(const std::string& path);

// ---- observation tables (.tsv, no feature columns) -------------------------

std::string serialize_observations(const pipeline::CovariateTable& table);
pipeline::CovariateTable parse_observations(const std::string& text);
pipeline::CovariateTable read_observations(const std::string& path);

// ---- fitted models and CV reports (JSON) ------------------------------------

std::string model_report_json(const ordinal::OrdinalModel& model);
std::string cv_report_json(const pipeline::CVReport& report);
std::string cv_report_text(const pipeline::CVReport& report);
pipeline::CVReport parse_cv_report_json(const std::string& text);

}  // namespace currentfit::io
