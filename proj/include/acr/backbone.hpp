#pragma once

// Patch tokenization and the pre-norm transformer encoder that hosts one
// MoPE adapter per layer.

#include <span>
#include <vector>

#include "acr/mope.hpp"

namespace acr {

struct BackboneConfig {
  Index image_size = 32;
  Index channels = 3;
  Index patch_size = 8;
  Index width = 64;  // d
  Index layers = 4;
  Index heads = 4;
  Index mlp_ratio = 4;
  double ln_eps = 1e-6;

  Index grid() const { return image_size / patch_size; }
  Index num_patches() const { return grid() * grid(); }  // M
  Index tokens() const { return num_patches() + 1; }      // 1 + M
  Index patch_dim() const { return patch_size * patch_size * channels; }
  void validate() const;
};

/// H x W x C image, pixels stored row-major in (y, x, c) order.
struct Image {
  Index height = 0;
  Index width = 0;
  Index channels = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(Index h, Index w, Index c) : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h * w * c), 0.0) {}
  double& at(Index y, Index x, Index c) { return pixels[static_cast<std::size_t>((y * width + x) * channels + c)]; }
  double at(Index y, Index x, Index c) const { return pixels[static_cast<std::size_t>((y * width + x) * channels + c)]; }
};

/// Flattens non-overlapping P x P patches in row-major patch order; each row
/// is one patch laid out (py, px, c). Throws ArgumentError when H or W is not
/// divisible by P.
Matrix patchify(const Image& image, Index patch_size);

/// (rows x P*P*C) patches -> (rows x d) embeddings.
Tensor patchify_project(const Matrix& patches, const Tensor& weight, const Tensor& bias);

/// X0 = [cls, e_1..e_M] + positional, for every image in the batch.
/// `patch_tokens` holds M consecutive rows per image; `positional` is (1+M) x d.
Tensor assemble_sequence(const Tensor& patch_tokens, const Tensor& cls, const Tensor& positional, Index batch);

struct EncoderLayer {
  Tensor ln1_gain, ln1_bias;
  Tensor qkv_weight, qkv_bias;  // d x 3d, 1 x 3d
  Tensor out_weight, out_bias;  // d x d, 1 x d
  Tensor ln2_gain, ln2_bias;
  Tensor ffn_in_weight, ffn_in_bias;    // d x 4d
  Tensor ffn_out_weight, ffn_out_bias;  // 4d x d
  MopeAdapter adapter;

  static EncoderLayer initialize(const BackboneConfig& config, const MopeConfig& mope, Rng& rng);
};

struct EncoderOptions {
  Index heads = 4;
  double ln_eps = 1e-6;
  bool use_mope = true;
};

struct EncoderOutput {
  Tensor tokens;                        // X^(L), (batch*(1+M)) x d
  std::vector<RoutingRecord> records;   // one per MoPE layer
};

/// Per layer:  h = x + MHSA(LN1(x));  x' = h + FFN(LN2(h)) + delta,
/// where delta is the MoPE update computed from LN2(h) (zero on CLS rows).
/// With `use_mope` false the delta term is omitted entirely.
EncoderOutput encoder_forward(const Tensor& sequence, std::span<const EncoderLayer> layers, Index batch,
                              const EncoderOptions& options);

}  // namespace acr
