#include "acr/moae.hpp"

#include <cmath>
#include <string>

#include "acr/error.hpp"

namespace acr {

void MoaeConfig::validate(Index num_patches) const {
  if (num_attributes < 1) throw ArgumentError("moae: num_attributes must be positive");
  if (top_j < 1 || top_j > num_patches) {
    throw ArgumentError("moae: top_j=" + std::to_string(top_j) + " outside [1, " + std::to_string(num_patches) + "]");
  }
  if (!(tau_attr > 0.0) || !(tau_attr_final > 0.0)) throw ArgumentError("moae: attribute temperatures must be positive");
  if (!(tau_cls > 0.0)) throw ArgumentError("moae: tau_cls must be positive");
}

MoaeHead MoaeHead::initialize(const MoaeConfig& config, Index width, Index num_patches, Rng& rng) {
  config.validate(num_patches);
  MoaeHead head;
  Matrix t(config.num_attributes, width);
  const double s = 1.0 / std::sqrt(static_cast<double>(width));
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = s * rng.normal();
  head.transform = Tensor::parameter(std::move(t));
  const Index n_routers = config.per_attribute_router ? config.num_attributes : 1;
  for (Index i = 0; i < n_routers; ++i) head.routers.push_back(Tensor::parameter(Matrix::Identity(num_patches, num_patches)));
  return head;
}

std::vector<Index> ClassSemantics::seen_classes() const {
  std::vector<Index> out;
  for (Index c = 0; c < num_classes(); ++c) {
    if (seen[static_cast<std::size_t>(c)]) out.push_back(c);
  }
  return out;
}

std::vector<Index> ClassSemantics::unseen_classes() const {
  std::vector<Index> out;
  for (Index c = 0; c < num_classes(); ++c) {
    if (!seen[static_cast<std::size_t>(c)]) out.push_back(c);
  }
  return out;
}

std::vector<Index> ClassSemantics::all_classes() const {
  std::vector<Index> out(static_cast<std::size_t>(num_classes()));
  for (Index c = 0; c < num_classes(); ++c) out[static_cast<std::size_t>(c)] = c;
  return out;
}

Matrix ClassSemantics::rows(const std::vector<Index>& classes, bool normalize) const {
  Matrix out(static_cast<Index>(classes.size()), num_attributes());
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const Index c = classes[i];
    if (c < 0 || c >= num_classes()) throw ArgumentError("ClassSemantics: class index out of range");
    out.row(static_cast<Index>(i)) = attributes.row(c);
    if (normalize) {
      const double norm = out.row(static_cast<Index>(i)).norm();
      if (norm > 0) out.row(static_cast<Index>(i)) /= norm;
    }
  }
  return out;
}

void ClassSemantics::validate() const {
  if (static_cast<Index>(seen.size()) != num_classes()) throw ArgumentError("ClassSemantics: one seen flag per class");
  if (num_classes() == 0 || num_attributes() == 0) throw ArgumentError("ClassSemantics: empty attribute matrix");
}

Tensor attribute_transform(const Tensor& patch_tokens, const Tensor& transform, Index batch) {
  if (patch_tokens.cols() != transform.cols()) throw ArgumentError("attribute_transform: width mismatch");
  return block_transpose(matmul_nt(patch_tokens, transform), batch);
}

TopjMaskResult attribute_route(const Tensor& attribute_maps, const std::vector<Tensor>& routers, Index num_attributes,
                               Index top_j, double tau, GumbelMode mode, const Matrix& noise) {
  if (routers.empty()) throw ArgumentError("attribute_route: no router");
  const Index m = attribute_maps.cols();
  if (top_j < 1 || top_j > m) throw ArgumentError("attribute_route: top_j=" + std::to_string(top_j) + " out of range");
  Tensor logits;
  if (routers.size() == 1) {
    logits = matmul_nt(attribute_maps, routers.front());
  } else {
    if (static_cast<Index>(routers.size()) != num_attributes || attribute_maps.rows() % num_attributes != 0) {
      throw ArgumentError("attribute_route: per-attribute routers do not match attribute count");
    }
    const Index batch = attribute_maps.rows() / num_attributes;
    for (Index a = 0; a < num_attributes; ++a) {
      std::vector<Index> rows;
      for (Index b = 0; b < batch; ++b) rows.push_back(b * num_attributes + a);
      const Tensor part = scatter_rows(matmul_nt(gather_rows(attribute_maps, rows), routers[static_cast<std::size_t>(a)]),
                                       rows, attribute_maps.rows());
      logits = logits.defined() ? logits + part : part;
    }
  }
  return gumbel_topj_rows(logits, top_j, tau, mode, noise);
}

PooledAttributes localize_pool(const Tensor& attribute_maps, const Tensor& masks, double divisor, Index batch) {
  if (!(divisor > 0.0)) throw ArgumentError("localize_pool: divisor must be positive");
  if (batch < 1 || attribute_maps.rows() % batch != 0) throw ArgumentError("localize_pool: rows not divisible by batch");
  PooledAttributes out;
  out.localized = hadamard(attribute_maps, masks);
  out.a_hat = reshape((1.0 / divisor) * sum_cols(out.localized), batch, attribute_maps.rows() / batch);
  return out;
}

Tensor class_scores(const Tensor& a_hat, const Matrix& class_attributes, double tau_cls) {
  if (class_attributes.rows() == 0) throw ArgumentError("class_scores: empty class subset");
  if (class_attributes.cols() != a_hat.cols()) throw ArgumentError("class_scores: attribute dimension mismatch");
  return tau_cls * matmul_nt(a_hat, Tensor::constant(class_attributes));
}

}  // namespace acr
