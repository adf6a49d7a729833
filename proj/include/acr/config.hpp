#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "acr/dataset.hpp"
#include "acr/losses.hpp"
#include "acr/model.hpp"

namespace acr {

struct OptimizerConfig {
  double learning_rate = 1e-2;
  Index steps = 2000;
  Index batch_size = 32;
};

/// Component switches; each maps onto a weight or mixing coefficient.
struct Ablations {
  bool no_load_balance = false;   // lambda1 = 0
  bool no_consistency = false;    // lambda2 = 0
  bool no_diversity = false;      // lambda3 = 0
  bool no_patch_routing = false;  // alpha = 0
};

struct TrainConfig {
  ModelConfig model;
  LossWeights weights;
  double loss_eps = kLossEps;
  OptimizerConfig optimizer;
  Ablations ablations;
  std::uint64_t seed = 0;
  Index log_every = 1;

  LossWeights effective_weights() const;
  ModelConfig effective_model() const;
  void validate() const;
};

struct ExperimentConfig {
  SyntheticConfig data;
  TrainConfig train;

  /// Keeps the shared image geometry and attribute count consistent.
  void sync_shared();
};

/// Flat key/value view; every key is listed by `config_keys()`.
nlohmann::json to_json(const ExperimentConfig& config);
/// Starts from defaults and applies every key of `flat`; unknown keys and
/// mistyped values raise ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& flat);
std::vector<std::string> config_keys();

/// Applies "key=value" onto a flat config, parsing the value with the key's type.
void apply_override(nlohmann::json& flat, const std::string& assignment);

}  // namespace acr
