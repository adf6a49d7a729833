#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "acr/dataset.hpp"
#include "acr/model.hpp"

namespace acr {

/// Active-expert threshold on the mean routing probability (0.1%).
inline constexpr double kActiveThreshold = 1e-3;
inline constexpr Index kHistogramBins = 20;

struct LayerUtilization {
  Index layer = 0;
  RowVector mean_probability;   // (a) per expert
  double usage_std = 0;         // (b) sigma of U = E * mean_probability
  double usage_cv = 0;          //     sigma_U / (mu_U + eps)
  std::vector<Index> histogram; // (c) counts of selected gate values over [0, 1]
  Index active_experts = 0;     // (d) mean probability above the threshold
};

struct UtilizationReport {
  std::vector<LayerUtilization> layers;
  Index tokens = 0;
  double threshold = kActiveThreshold;
  Index bins = kHistogramBins;

  double mean_usage_cv() const;
  double mean_active_experts() const;
  nlohmann::json to_json() const;
};

/// `layer_gates[l]` stacks the gate rows of every routed token at layer l.
/// The histogram counts the nonzero (top-k) gate entries.
UtilizationReport expert_utilization_report(std::span<const Matrix> layer_gates, double threshold = kActiveThreshold,
                                            Index bins = kHistogramBins);

/// Inference-mode gates for `samples`: one (N*M) x E matrix per MoPE layer.
std::vector<Matrix> collect_routing(const AcrModel& model, const ZslDataset& dataset, std::span<const Index> samples,
                                    Index batch_size = 64);

/// Per layer `layer{l}.arr` of shape (N, M, E).
void export_routing(const std::vector<Matrix>& layer_gates, Index tokens_per_image, const std::filesystem::path& dir);
/// Reads every `layer{l}.arr` back into (N*M) x E matrices.
std::vector<Matrix> import_routing(const std::filesystem::path& dir);

struct AttributeMapExport {
  Matrix maps;         // (N*A) x M, the masked maps A~ of every image
  Matrix mask_index;   // (N*A) x j, selected patch positions
};

AttributeMapExport collect_attribute_maps(const AcrModel& model, const ZslDataset& dataset,
                                          std::span<const Index> samples, Index batch_size = 64);
/// attribute_maps.arr (N, A, M), mask_indices.arr (N, A, j), samples.arr (N).
void export_attribute_maps(const AttributeMapExport& maps, std::span<const Index> samples, Index num_attributes,
                           const std::filesystem::path& dir);

}  // namespace acr
