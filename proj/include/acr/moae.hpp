#pragma once

// Mixture of Attribute Experts head: patch tokens -> per-image A x M attribute
// maps -> top-j patch masks per attribute -> pooled attribute prediction.

#include <vector>

#include "acr/ops.hpp"

namespace acr {

enum class PoolDivisor {
  TopJ,        ///< mean over the j selected patches
  AllPatches,  ///< mean over all M patches
};

struct MoaeConfig {
  Index num_attributes = 16;
  Index top_j = 3;
  double tau_attr = 1.0;
  double tau_attr_final = 0.5;  // linear anneal target over training
  PoolDivisor pool_divisor = PoolDivisor::TopJ;
  bool per_attribute_router = false;
  double tau_cls = 2.0;
  bool normalize_semantics = false;

  void validate(Index num_patches) const;
};

struct MoaeHead {
  Tensor transform;              // A x d
  std::vector<Tensor> routers;   // M x M; one shared or one per attribute

  /// transform ~ N(0, 1/d); routers start at the identity, so each attribute
  /// initially keeps its j strongest patches.
  static MoaeHead initialize(const MoaeConfig& config, Index width, Index num_patches, Rng& rng);
};

/// Per-class attribute vectors with the seen/unseen partition.
struct ClassSemantics {
  Matrix attributes;         // C x A, row y is a_y
  std::vector<bool> seen;    // per class

  Index num_classes() const { return attributes.rows(); }
  Index num_attributes() const { return attributes.cols(); }
  std::vector<Index> seen_classes() const;
  std::vector<Index> unseen_classes() const;
  std::vector<Index> all_classes() const;
  /// Rows of `classes`, optionally l2-normalized.
  Matrix rows(const std::vector<Index>& classes, bool normalize = false) const;
  void validate() const;
};

/// Column m of each image's A x M block equals transform * h_m.
/// `patch_tokens` holds M rows per image; result is (batch*A) x M.
Tensor attribute_transform(const Tensor& patch_tokens, const Tensor& transform, Index batch);

/// Router logits per attribute row (W_router * A[a,:]) followed by the
/// top-j straight-through Gumbel mask. Rows follow the (image, attribute)
/// order of `attribute_maps`.
TopjMaskResult attribute_route(const Tensor& attribute_maps, const std::vector<Tensor>& routers,
                               Index num_attributes, Index top_j, double tau, GumbelMode mode, const Matrix& noise);

struct PooledAttributes {
  Tensor localized;  // (batch*A) x M, A[a,:] * f_a
  Tensor a_hat;      // batch x A
};

PooledAttributes localize_pool(const Tensor& attribute_maps, const Tensor& masks, double divisor, Index batch);

/// s_c = tau_cls * <a_hat, a_c> for each row of `class_attributes`.
Tensor class_scores(const Tensor& a_hat, const Matrix& class_attributes, double tau_cls);

}  // namespace acr
