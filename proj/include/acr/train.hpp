#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include <json.hpp>

#include "acr/config.hpp"
#include "acr/dataset.hpp"
#include "acr/losses.hpp"
#include "acr/model.hpp"

namespace acr {

struct StepLog {
  Index step = 0;
  double cls = 0;
  double lb = 0;
  double cons = 0;
  double div = 0;
  double total = 0;
  double tau_attr = 0;

  /// Keys: step, L_cls, L_lb, L_cons, L_div, L_total, tau_attr.
  nlohmann::json to_json() const;
};

/// Mean routing statistics of one epoch, per MoPE layer.
struct EpochRouting {
  Index epoch = 0;
  Index step = 0;  // last step of the epoch
  std::vector<RowVector> mean_gate;
  std::vector<double> usage_cv;

  nlohmann::json to_json() const;
};

struct TrainSinks {
  std::ostream* step_log = nullptr;     // NDJSON, one StepLog per logged step
  std::ostream* routing_log = nullptr;  // NDJSON, one EpochRouting per epoch
  /// Where a diagnostic dump goes if the loss turns non-finite.
  std::optional<std::filesystem::path> dump_dir;
};

struct TrainResult {
  AcrModel model;
  std::vector<StepLog> history;
  std::vector<EpochRouting> routing;
};

/// Linear anneal from `start` at step 0 to `end` at the last step.
double annealed_tau(double start, double end, Index step, Index steps);

/// Plain SGD on L_total over the train split. Deterministic in the config:
/// batch order and Gumbel noise come from substreams of the training seed.
/// Throws TrainingDiverged on a non-finite loss.
TrainResult train(const TrainConfig& config, const ZslDataset& dataset, const TrainSinks& sinks = {});

}  // namespace acr
