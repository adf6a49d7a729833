#pragma once

#include <string>
#include <utility>
#include <vector>

#include "acr/backbone.hpp"
#include "acr/moae.hpp"

namespace acr {

struct ModelConfig {
  BackboneConfig backbone;
  MopeConfig mope;
  MoaeConfig moae;

  void validate() const;
};

enum class ForwardMode {
  Train,      ///< straight-through Gumbel attribute masks
  Inference,  ///< hard top-j attribute masks, no noise
};

struct ForwardResult {
  Tensor tokens;                       // final-normed X^(L)
  std::vector<RoutingRecord> records;  // one per MoPE layer
  Tensor attribute_maps;               // (batch*A) x M
  Tensor masks;                        // (batch*A) x M
  Selection mask_indices;              // per (image, attribute) row
  Tensor localized;                    // (batch*A) x M
  Tensor a_hat;                        // batch x A
};

/// Full ACR network: patch embedding, MoPE-adapted encoder, MoAE head.
class AcrModel {
 public:
  static AcrModel initialize(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  /// Toggles the MoPE residual; with it off the encoder is a plain ViT.
  void set_mope_enabled(bool enabled) { config_.mope.enabled = enabled; }

  /// `patches` stacks M patch rows (from `patchify`) per image.
  /// `attribute_noise` is (batch*A) x M Gumbel noise; ignored in Inference.
  /// `tau_attr` overrides the configured attribute temperature when > 0.
  ForwardResult forward(const Matrix& patches, Index batch, ForwardMode mode, const Matrix& attribute_noise = {},
                        double tau_attr = 0.0) const;

  /// Every trainable tensor with a stable, unique name.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;

  Tensor patch_weight, patch_bias, cls_token, positional;
  std::vector<EncoderLayer> layers;
  Tensor final_gain, final_bias;
  MoaeHead head;

 private:
  ModelConfig config_;
};

}  // namespace acr
