#pragma once

// Training objectives: seen-class cross-entropy plus three routing
// regularizers over MoPE gate distributions.

#include <span>
#include <vector>

#include "acr/mope.hpp"

namespace acr {

inline constexpr double kLossEps = 1e-8;

struct LossWeights {
  double lambda1 = 1.0;   // load balance
  double lambda2 = 1e-2;  // cross-layer consistency
  double lambda3 = 1e-4;  // diversity

  void validate() const;
};

/// Normalized expert usage of one layer: U_e = E * mean gate.
struct UsageStats {
  RowVector mean_gate;
  RowVector usage;
  double mu = 0;
  double sigma = 0;

  double coefficient_of_variation(double eps = kLossEps) const { return sigma / (mu + eps); }
};

UsageStats usage_stats(const Matrix& gates);

Tensor classification_loss(const Tensor& scores, std::span<const Index> labels);

/// Per layer sigma_U / (mu_U + eps) over all tokens of the batch, averaged over layers.
Tensor load_balance_loss(std::span<const Tensor> layer_gates, double eps = kLossEps);
Tensor load_balance_loss(std::span<const RoutingRecord> records, double eps = kLossEps);

/// (1 / (M L)) sum_m sum_l KL(w_m^l || mean_l w_m^l), averaged over images.
/// Every layer's gate tensor has the same token rows.
Tensor consistency_loss(std::span<const Tensor> layer_gates, double eps = kLossEps);
Tensor consistency_loss(std::span<const RoutingRecord> records, double eps = kLossEps);

/// -(1 / (M L)) sum_l sum_m H(w_m^l), H(w) = -sum_e w_e log(w_e + eps).
Tensor diversity_loss(std::span<const Tensor> layer_gates, double eps = kLossEps);
Tensor diversity_loss(std::span<const RoutingRecord> records, double eps = kLossEps);

/// L_cls + lambda1 L_lb + lambda2 L_cons + lambda3 L_div. Terms with a zero
/// weight are dropped rather than multiplied by zero.
Tensor total_loss(const Tensor& cls, const Tensor& lb, const Tensor& cons, const Tensor& div, const LossWeights& weights);

}  // namespace acr
