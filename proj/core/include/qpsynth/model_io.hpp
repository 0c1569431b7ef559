#pragma once

#include "qpsynth/pipeline.hpp"

#include <filesystem>
#include <string>

namespace qpsynth {

/// Single JSON document. Doubles are written in their shortest round-trip
/// decimal form, so load(save(m)) reproduces every field exactly.
std::string model_to_json(const PatientModel& model);
/// Throws FormatError on malformed JSON, a missing field or a format_version
/// other than kModelFormatVersion, and DataError when the decoded model
/// breaks an invariant.
PatientModel model_from_json(const std::string& text);

void save_model(const PatientModel& model, const std::filesystem::path& path);
PatientModel load_model(const std::filesystem::path& path);

/// Flat key-value object mirroring PipelineConfig. Unknown keys and bad
/// values throw FormatError; absent keys keep their defaults.
PipelineConfig config_from_json(const std::string& text);
std::string config_to_json(const PipelineConfig& cfg);
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace qpsynth
