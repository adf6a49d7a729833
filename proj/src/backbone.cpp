#include "acr/backbone.hpp"

#include <cmath>
#include <string>

#include "acr/error.hpp"

namespace acr {

namespace {

Tensor gaussian_parameter(Index rows, Index cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
  return Tensor::parameter(std::move(m));
}

Tensor zeros(Index rows, Index cols) { return Tensor::parameter(Matrix::Zero(rows, cols)); }
Tensor ones(Index rows, Index cols) { return Tensor::parameter(Matrix::Ones(rows, cols)); }

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return matmul(x, weight) + broadcast(bias, x.rows(), weight.cols());
}

}  // namespace

void BackboneConfig::validate() const {
  if (patch_size < 1 || image_size % patch_size != 0) {
    throw ArgumentError("backbone: image size " + std::to_string(image_size) + " not divisible by patch size " +
                        std::to_string(patch_size));
  }
  if (channels < 1 || width < 1 || layers < 1 || mlp_ratio < 1) throw ArgumentError("backbone: nonpositive extent");
  if (heads < 1 || width % heads != 0) throw ArgumentError("backbone: width must be divisible by heads");
}

Matrix patchify(const Image& image, Index patch_size) {
  if (patch_size < 1 || image.height % patch_size != 0 || image.width % patch_size != 0) {
    throw ArgumentError("patchify: " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                        " image is not divisible into " + std::to_string(patch_size) + "-pixel patches");
  }
  const Index gy = image.height / patch_size;
  const Index gx = image.width / patch_size;
  const Index c = image.channels;
  Matrix out(gy * gx, patch_size * patch_size * c);
  for (Index py = 0; py < gy; ++py) {
    for (Index px = 0; px < gx; ++px) {
      const Index row = py * gx + px;
      Index col = 0;
      for (Index y = 0; y < patch_size; ++y) {
        for (Index x = 0; x < patch_size; ++x) {
          for (Index ch = 0; ch < c; ++ch) out(row, col++) = image.at(py * patch_size + y, px * patch_size + x, ch);
        }
      }
    }
  }
  return out;
}

Tensor patchify_project(const Matrix& patches, const Tensor& weight, const Tensor& bias) {
  if (patches.cols() != weight.rows()) throw ArgumentError("patchify_project: patch length differs from projection");
  return affine(Tensor::constant(patches), weight, bias);
}

Tensor assemble_sequence(const Tensor& patch_tokens, const Tensor& cls, const Tensor& positional, Index batch) {
  const Index d = patch_tokens.cols();
  if (batch < 1 || patch_tokens.rows() % batch != 0) throw ArgumentError("assemble_sequence: rows not divisible by batch");
  const Index m = patch_tokens.rows() / batch;
  if (cls.rows() != 1 || cls.cols() != d) throw ArgumentError("assemble_sequence: cls must be 1 x d");
  if (positional.rows() != m + 1 || positional.cols() != d) {
    throw ArgumentError("assemble_sequence: positional must be (1+M) x d");
  }
  std::vector<Index> cls_rows;
  std::vector<Index> patch_rows;
  for (Index b = 0; b < batch; ++b) {
    cls_rows.push_back(b * (m + 1));
    for (Index p = 1; p <= m; ++p) patch_rows.push_back(b * (m + 1) + p);
  }
  const Index total = batch * (m + 1);
  const Tensor sequence = scatter_rows(repeat_rows(cls, batch), cls_rows, total) +
                          scatter_rows(patch_tokens, patch_rows, total);
  return sequence + reshape(broadcast(reshape(positional, 1, (m + 1) * d), batch, (m + 1) * d), total, d);
}

EncoderLayer EncoderLayer::initialize(const BackboneConfig& config, const MopeConfig& mope, Rng& rng) {
  const Index d = config.width;
  const Index hidden = d * config.mlp_ratio;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  EncoderLayer layer;
  layer.ln1_gain = ones(1, d);
  layer.ln1_bias = zeros(1, d);
  layer.qkv_weight = gaussian_parameter(d, 3 * d, s, rng);
  layer.qkv_bias = zeros(1, 3 * d);
  layer.out_weight = gaussian_parameter(d, d, s, rng);
  layer.out_bias = zeros(1, d);
  layer.ln2_gain = ones(1, d);
  layer.ln2_bias = zeros(1, d);
  layer.ffn_in_weight = gaussian_parameter(d, hidden, s, rng);
  layer.ffn_in_bias = zeros(1, hidden);
  layer.ffn_out_weight = gaussian_parameter(hidden, d, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  layer.ffn_out_bias = zeros(1, d);
  layer.adapter = MopeAdapter::initialize(mope, d, rng);
  return layer;
}

EncoderOutput encoder_forward(const Tensor& sequence, std::span<const EncoderLayer> layers, Index batch,
                              const EncoderOptions& options) {
  if (layers.empty()) throw ArgumentError("encoder_forward: at least one layer required");
  if (batch < 1 || sequence.rows() % batch != 0) throw ArgumentError("encoder_forward: rows not divisible by batch");
  const Index tokens = sequence.rows() / batch;
  EncoderOutput out;
  Tensor x = sequence;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const EncoderLayer& layer = layers[l];
    const Tensor qkv = affine(layer_norm_rows(x, layer.ln1_gain, layer.ln1_bias, options.ln_eps), layer.qkv_weight,
                              layer.qkv_bias);
    const Tensor attended = multi_head_attention(qkv, batch, tokens, options.heads);
    const Tensor h = x + affine(attended, layer.out_weight, layer.out_bias);

    const Tensor normed = layer_norm_rows(h, layer.ln2_gain, layer.ln2_bias, options.ln_eps);
    const Tensor ffn = affine(gelu(affine(normed, layer.ffn_in_weight, layer.ffn_in_bias)), layer.ffn_out_weight,
                              layer.ffn_out_bias);
    x = h + ffn;
    if (options.use_mope) {
      MopeOutput routed = mope_layer(normed, layer.adapter, batch, static_cast<Index>(l));
      x = x + routed.delta;
      out.records.push_back(std::move(routed.record));
    }
  }
  out.tokens = x;
  return out;
}

}  // namespace acr
