#pragma once

// Mixture of Patch Experts: dual-level (instance + patch) top-k routing over
// low-rank LoRA experts, producing a residual update for every patch token.

#include <string>
#include <vector>

#include "acr/ops.hpp"
#include "acr/rng.hpp"

namespace acr {

enum class RouterInit {
  Normal,  ///< every router row ~ N(0, 1/d)
  Skewed,  ///< only the first `skew_experts` rows are nonzero; the rest start at exactly 0
};

struct MopeConfig {
  Index num_experts = 20;
  Index top_k = 2;
  Index rank = 4;
  double alpha = 0.5;
  double tau = 1.0;
  bool per_expert_down = false;
  bool enabled = true;
  RouterInit router_init = RouterInit::Normal;
  Index skew_experts = 2;

  void validate(Index width) const;
};

struct MopeAdapter {
  Tensor instance_router;     // E x d
  Tensor patch_router;        // E x d
  std::vector<Tensor> down;   // r x d; one shared, or one per expert
  std::vector<Tensor> up;     // d x r per expert
  double alpha = 0.5;
  Index top_k = 2;
  double tau = 1.0;

  Index num_experts() const { return instance_router.rows(); }
  Index width() const { return instance_router.cols(); }
  Index rank() const { return down.front().rows(); }
  bool shared_down() const { return down.size() == 1; }

  /// Checks r < d/2, 1 <= k <= E and alpha in [0, 1].
  void validate() const;

  /// Down-projections ~ N(0, 1/d), up-projections zero, routers per `RouterInit`.
  static MopeAdapter initialize(const MopeConfig& config, Index width, Rng& rng);
};

/// Gates of one MoPE layer for a batch of images.
struct RoutingRecord {
  Index layer = 0;
  Index tokens_per_image = 0;  // M, patch tokens only
  Tensor gates;                // (batch*M) x E, zero off the top-k
  Selection selected;          // support of every gate row
  Matrix instance_logits;      // batch x E
  std::vector<Index> up_projection_calls;  // per image

  Index batch() const { return tokens_per_image == 0 ? 0 : gates.rows() / tokens_per_image; }
  Index num_experts() const { return gates.cols(); }
  /// M x E gate matrix of one image.
  Matrix image_gates(Index image) const;
};

Tensor instance_route(const Tensor& cls_tokens, const Tensor& instance_router);
Tensor patch_route(const Tensor& patch_tokens, const Tensor& patch_router);

/// w_m = masked_softmax(topk_mask((1-alpha) u + alpha v_m, k), tau).
/// `u` holds one row per image; `v` holds M consecutive rows per image.
TopkSoftmaxResult gate(const Tensor& u, const Tensor& v, double alpha, Index k, double tau);

struct ExpertUpdate {
  Tensor delta;                           // rows x d
  std::vector<Index> up_projection_calls;  // per input row
};

/// Renormalized weighted sum of the routed LoRA experts for every row of
/// `tokens`. Only experts in a row's selection are evaluated.
ExpertUpdate expert_apply(const Tensor& tokens, const Tensor& gates, const Selection& selected,
                          const MopeAdapter& adapter);

struct MopeOutput {
  Tensor delta;  // (batch*(1+M)) x d; CLS rows are zero
  RoutingRecord record;
};

/// Routes a batch of token sequences (1+M rows per image, CLS first).
MopeOutput mope_layer(const Tensor& tokens, const MopeAdapter& adapter, Index batch, Index layer_index);

}  // namespace acr
