#include "acr/routing_report.hpp"

#include <algorithm>
#include <cmath>

#include "acr/array_io.hpp"
#include "acr/error.hpp"
#include "acr/losses.hpp"

namespace acr {

namespace {

nlohmann::json row_json(const RowVector& r) { return std::vector<double>(r.data(), r.data() + r.size()); }

Matrix stacked_patches(const ZslDataset& dataset, std::span<const Index> samples, std::size_t start, std::size_t end,
                       const BackboneConfig& bb) {
  const Index m = bb.num_patches();
  Matrix patches(static_cast<Index>(end - start) * m, bb.patch_dim());
  for (std::size_t i = start; i < end; ++i) {
    patches.middleRows(static_cast<Index>(i - start) * m, m) =
        patchify(dataset.samples[static_cast<std::size_t>(samples[i])].image, bb.patch_size);
  }
  return patches;
}

NdArray rank3(const Matrix& rows, Index outer, Index middle) {
  NdArray a;
  a.shape = {static_cast<std::uint32_t>(outer), static_cast<std::uint32_t>(middle),
             static_cast<std::uint32_t>(rows.cols())};
  a.data.assign(rows.data(), rows.data() + rows.size());  // row-major storage
  return a;
}

}  // namespace

double UtilizationReport::mean_usage_cv() const {
  if (layers.empty()) return 0;
  double s = 0;
  for (const auto& l : layers) s += l.usage_cv;
  return s / static_cast<double>(layers.size());
}

double UtilizationReport::mean_active_experts() const {
  if (layers.empty()) return 0;
  double s = 0;
  for (const auto& l : layers) s += static_cast<double>(l.active_experts);
  return s / static_cast<double>(layers.size());
}

nlohmann::json UtilizationReport::to_json() const {
  nlohmann::json ls = nlohmann::json::array();
  for (const auto& l : layers) {
    ls.push_back({{"layer", l.layer},
                  {"mean_probability", row_json(l.mean_probability)},
                  {"usage_std", l.usage_std},
                  {"usage_cv", l.usage_cv},
                  {"histogram", l.histogram},
                  {"active_experts", l.active_experts}});
  }
  std::vector<double> edges;
  for (Index b = 0; b <= bins; ++b) edges.push_back(static_cast<double>(b) / static_cast<double>(bins));
  return {{"tokens", tokens},
          {"threshold", threshold},
          {"histogram_edges", edges},
          {"mean_usage_cv", mean_usage_cv()},
          {"mean_active_experts", mean_active_experts()},
          {"layers", ls}};
}

UtilizationReport expert_utilization_report(std::span<const Matrix> layer_gates, double threshold, Index bins) {
  if (bins < 1) throw ArgumentError("expert_utilization_report: bins must be positive");
  UtilizationReport report;
  report.threshold = threshold;
  report.bins = bins;
  for (std::size_t l = 0; l < layer_gates.size(); ++l) {
    const Matrix& g = layer_gates[l];
    if (g.rows() == 0) throw ArgumentError("expert_utilization_report: a layer has no tokens");
    if (l == 0) report.tokens = g.rows();
    LayerUtilization u;
    u.layer = static_cast<Index>(l);
    const UsageStats stats = usage_stats(g);
    u.mean_probability = stats.mean_gate;
    u.usage_std = stats.sigma;
    u.usage_cv = stats.coefficient_of_variation();
    u.histogram.assign(static_cast<std::size_t>(bins), 0);
    for (Index i = 0; i < g.size(); ++i) {
      const double w = g.data()[i];
      if (w <= 0) continue;
      const auto bin = std::min<Index>(bins - 1, static_cast<Index>(std::floor(w * static_cast<double>(bins))));
      ++u.histogram[static_cast<std::size_t>(bin)];
    }
    u.active_experts = (u.mean_probability.array() > threshold).count();
    report.layers.push_back(std::move(u));
  }
  return report;
}

std::vector<Matrix> collect_routing(const AcrModel& model, const ZslDataset& dataset, std::span<const Index> samples,
                                    Index batch_size) {
  const auto& bb = model.config().backbone;
  const Index m = bb.num_patches();
  const Index e = model.config().mope.num_experts;
  std::vector<Matrix> out;
  if (!model.config().mope.enabled) return out;
  out.assign(static_cast<std::size_t>(bb.layers), Matrix(static_cast<Index>(samples.size()) * m, e));
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    const ForwardResult fwd =
        model.forward(stacked_patches(dataset, samples, start, end, bb), static_cast<Index>(end - start),
                      ForwardMode::Inference);
    for (std::size_t l = 0; l < fwd.records.size(); ++l) {
      out[l].middleRows(static_cast<Index>(start) * m, static_cast<Index>(end - start) * m) =
          fwd.records[l].gates.value();
    }
  }
  return out;
}

void export_routing(const std::vector<Matrix>& layer_gates, Index tokens_per_image, const std::filesystem::path& dir) {
  if (tokens_per_image < 1) throw ArgumentError("export_routing: tokens_per_image must be positive");
  std::filesystem::create_directories(dir);
  for (std::size_t l = 0; l < layer_gates.size(); ++l) {
    const Matrix& g = layer_gates[l];
    if (g.rows() % tokens_per_image != 0) throw ArgumentError("export_routing: rows are not whole images");
    write_array(dir / ("layer" + std::to_string(l) + ".arr"), rank3(g, g.rows() / tokens_per_image, tokens_per_image));
  }
}

std::vector<Matrix> import_routing(const std::filesystem::path& dir) {
  std::vector<Matrix> out;
  for (std::size_t l = 0;; ++l) {
    const auto path = dir / ("layer" + std::to_string(l) + ".arr");
    if (!std::filesystem::exists(path)) break;
    const NdArray a = read_array(path);
    if (a.shape.size() != 3) throw FormatError("routing export must be rank 3: " + path.string());
    Matrix g(static_cast<Index>(a.shape[0]) * a.shape[1], a.shape[2]);
    std::copy(a.data.begin(), a.data.end(), g.data());
    out.push_back(std::move(g));
  }
  return out;
}

AttributeMapExport collect_attribute_maps(const AcrModel& model, const ZslDataset& dataset,
                                          std::span<const Index> samples, Index batch_size) {
  const auto& bb = model.config().backbone;
  const Index m = bb.num_patches();
  const Index a = model.config().moae.num_attributes;
  const Index j = model.config().moae.top_j;
  AttributeMapExport out{Matrix(static_cast<Index>(samples.size()) * a, m),
                         Matrix(static_cast<Index>(samples.size()) * a, j)};
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    const ForwardResult fwd =
        model.forward(stacked_patches(dataset, samples, start, end, bb), static_cast<Index>(end - start),
                      ForwardMode::Inference);
    const Index row0 = static_cast<Index>(start) * a;
    out.maps.middleRows(row0, fwd.localized.rows()) = fwd.localized.value();
    for (std::size_t r = 0; r < fwd.mask_indices.size(); ++r) {
      const auto& sel = fwd.mask_indices[r];
      for (Index c = 0; c < j; ++c) {
        out.mask_index(row0 + static_cast<Index>(r), c) = static_cast<double>(sel[static_cast<std::size_t>(c)]);
      }
    }
  }
  return out;
}

void export_attribute_maps(const AttributeMapExport& maps, std::span<const Index> samples, Index num_attributes,
                           const std::filesystem::path& dir) {
  const auto n = static_cast<Index>(samples.size());
  if (maps.maps.rows() != n * num_attributes) throw ArgumentError("export_attribute_maps: row count mismatch");
  std::filesystem::create_directories(dir);
  write_array(dir / "attribute_maps.arr", rank3(maps.maps, n, num_attributes));
  write_array(dir / "mask_indices.arr", rank3(maps.mask_index, n, num_attributes));
  NdArray ids;
  ids.shape = {static_cast<std::uint32_t>(n)};
  for (Index i : samples) ids.data.push_back(static_cast<double>(i));
  write_array(dir / "samples.arr", ids);
}

}  // namespace acr
