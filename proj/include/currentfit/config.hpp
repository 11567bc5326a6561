#pragma once

#include "currentfit/pipeline.hpp"

#include <string>
#include <vector>

namespace currentfit::pipeline {

/// Parses an INI-style study file ([section] blocks of key = value lines,
/// '#' comments). Unknown keys are configuration errors naming the key.
StudyConfig parse_study_config(const std::string& path);

StudyConfig parse_study_config_text(const std::string& text, const std::string& origin = "<inline>");

/// Applies one "section.key=value" override on top of a parsed config.
void apply_override(StudyConfig& config, const std::string& assignment);

/// Canonical key = value rendering of every field in a fixed order; equal
/// configurations produce identical strings.
std::string canonical_config_string(const StudyConfig& config);

std::uint64_t config_hash(const StudyConfig& config);

}  // namespace currentfit::pipeline
