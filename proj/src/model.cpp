#include "acr/model.hpp"

#include <cmath>

#include "acr/error.hpp"

namespace acr {

void ModelConfig::validate() const {
  backbone.validate();
  mope.validate(backbone.width);
  moae.validate(backbone.num_patches());
}

AcrModel AcrModel::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  AcrModel model;
  model.config_ = config;
  const auto& bb = config.backbone;
  const Index d = bb.width;
  Rng rng(seed, 0x6d6f64656cull);

  auto gaussian = [&](Index rows, Index cols, double stddev) {
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
    return Tensor::parameter(std::move(m));
  };
  model.patch_weight = gaussian(bb.patch_dim(), d, 1.0 / std::sqrt(static_cast<double>(bb.patch_dim())));
  model.patch_bias = Tensor::parameter(Matrix::Zero(1, d));
  model.cls_token = gaussian(1, d, 0.02);
  model.positional = gaussian(bb.tokens(), d, 0.02);
  for (Index l = 0; l < bb.layers; ++l) model.layers.push_back(EncoderLayer::initialize(bb, config.mope, rng));
  model.final_gain = Tensor::parameter(Matrix::Ones(1, d));
  model.final_bias = Tensor::parameter(Matrix::Zero(1, d));
  model.head = MoaeHead::initialize(config.moae, d, bb.num_patches(), rng);
  return model;
}

ForwardResult AcrModel::forward(const Matrix& patches, Index batch, ForwardMode mode, const Matrix& attribute_noise,
                                double tau_attr) const {
  const auto& bb = config_.backbone;
  const auto& moae = config_.moae;
  const Index m = bb.num_patches();
  if (batch < 1 || patches.rows() != batch * m) throw ArgumentError("AcrModel::forward: expected M patch rows per image");

  const Tensor embedded = patchify_project(patches, patch_weight, patch_bias);
  const Tensor sequence = assemble_sequence(embedded, cls_token, positional, batch);
  EncoderOptions options;
  options.heads = bb.heads;
  options.ln_eps = bb.ln_eps;
  options.use_mope = config_.mope.enabled;
  EncoderOutput encoded = encoder_forward(sequence, layers, batch, options);

  ForwardResult out;
  out.tokens = layer_norm_rows(encoded.tokens, final_gain, final_bias, bb.ln_eps);
  out.records = std::move(encoded.records);

  std::vector<Index> patch_rows;
  patch_rows.reserve(static_cast<std::size_t>(batch * m));
  for (Index b = 0; b < batch; ++b) {
    for (Index p = 1; p <= m; ++p) patch_rows.push_back(b * (m + 1) + p);
  }
  const Tensor patch_tokens = gather_rows(out.tokens, patch_rows);
  out.attribute_maps = attribute_transform(patch_tokens, head.transform, batch);

  const GumbelMode gumbel = mode == ForwardMode::Train ? GumbelMode::StraightThrough : GumbelMode::Hard;
  const double tau = tau_attr > 0 ? tau_attr : moae.tau_attr;
  Matrix noise = attribute_noise;
  if (gumbel == GumbelMode::Hard || noise.size() == 0) noise = Matrix::Zero(out.attribute_maps.rows(), m);
  TopjMaskResult routed =
      attribute_route(out.attribute_maps, head.routers, moae.num_attributes, moae.top_j, tau, gumbel, noise);
  out.masks = routed.mask;
  out.mask_indices = std::move(routed.selected);

  const double divisor = moae.pool_divisor == PoolDivisor::TopJ ? static_cast<double>(moae.top_j) : static_cast<double>(m);
  PooledAttributes pooled = localize_pool(out.attribute_maps, out.masks, divisor, batch);
  out.localized = pooled.localized;
  out.a_hat = pooled.a_hat;
  return out;
}

std::vector<std::pair<std::string, Tensor>> AcrModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out{{"patch.weight", patch_weight},
                                                  {"patch.bias", patch_bias},
                                                  {"cls_token", cls_token},
                                                  {"positional", positional}};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    out.insert(out.end(), {{p + "ln1.gain", L.ln1_gain},
                           {p + "ln1.bias", L.ln1_bias},
                           {p + "attn.qkv_weight", L.qkv_weight},
                           {p + "attn.qkv_bias", L.qkv_bias},
                           {p + "attn.out_weight", L.out_weight},
                           {p + "attn.out_bias", L.out_bias},
                           {p + "ln2.gain", L.ln2_gain},
                           {p + "ln2.bias", L.ln2_bias},
                           {p + "ffn.in_weight", L.ffn_in_weight},
                           {p + "ffn.in_bias", L.ffn_in_bias},
                           {p + "ffn.out_weight", L.ffn_out_weight},
                           {p + "ffn.out_bias", L.ffn_out_bias},
                           {p + "mope.instance_router", L.adapter.instance_router},
                           {p + "mope.patch_router", L.adapter.patch_router}});
    for (std::size_t i = 0; i < L.adapter.down.size(); ++i) {
      out.emplace_back(p + "mope.down" + std::to_string(i), L.adapter.down[i]);
    }
    for (std::size_t i = 0; i < L.adapter.up.size(); ++i) {
      out.emplace_back(p + "mope.up" + std::to_string(i), L.adapter.up[i]);
    }
  }
  out.emplace_back("final_ln.gain", final_gain);
  out.emplace_back("final_ln.bias", final_bias);
  out.emplace_back("moae.transform", head.transform);
  for (std::size_t i = 0; i < head.routers.size(); ++i) out.emplace_back("moae.router" + std::to_string(i), head.routers[i]);
  return out;
}

}  // namespace acr
