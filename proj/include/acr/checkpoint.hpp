#pragma once

#include <filesystem>

#include "acr/config.hpp"
#include "acr/model.hpp"

namespace acr {

/// Directory layout: manifest.json (config, parameter names and shapes) and
/// one `<name>.arr` per parameter. Written to a temporary sibling and renamed.
void save_checkpoint(const AcrModel& model, const ExperimentConfig& config, const std::filesystem::path& dir);

struct Checkpoint {
  AcrModel model;
  ExperimentConfig config;
};

/// Throws FormatError on a missing, malformed, or shape-mismatched checkpoint.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace acr
