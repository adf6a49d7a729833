#include "acr/gradcheck_suite.hpp"

#include <algorithm>
#include <functional>

#include "acr/backbone.hpp"
#include "acr/gradcheck.hpp"
#include "acr/losses.hpp"
#include "acr/moae.hpp"
#include "acr/mope.hpp"
#include "acr/ops.hpp"
#include "acr/rng.hpp"

namespace acr {

namespace {

Matrix random_matrix(Index rows, Index cols, double scale, Rng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

Index pick(Index lo, Index hi, Rng& rng) {
  return lo + static_cast<Index>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

/// Reduces a matrix output to a scalar with fixed random weights.
Tensor project(const Tensor& out, const Matrix& weights) { return sum(hadamard(out, Tensor::constant(weights))); }

using Case = std::function<double(Rng&)>;

double gate_case(Rng& rng) {
  const Index b = pick(1, 3, rng), m = pick(2, 5, rng), d = pick(3, 8, rng), e = pick(2, 8, rng);
  const Index k = pick(1, e, rng);
  const double alpha = rng.uniform(), tau = 0.5 + rng.uniform();
  const Matrix r = random_matrix(b * m, e, 1.0, rng);
  const std::vector<Matrix> inputs{random_matrix(b, d, 1.0, rng), random_matrix(b * m, d, 1.0, rng),
                                   random_matrix(e, d, 0.5, rng), random_matrix(e, d, 0.5, rng)};
  return gradcheck_multi(
      [&](std::span<const Tensor> x) {
        const TopkSoftmaxResult g =
            gate(instance_route(x[0], x[2]), patch_route(x[1], x[3]), alpha, k, tau);
        return project(g.weights, r);
      },
      inputs);
}

double expert_case(Rng& rng) {
  const Index rows = pick(2, 8, rng), e = pick(2, 6, rng), rank = pick(1, 2, rng);
  const Index d = pick(2 * rank + 1, 8, rng), k = pick(1, e, rng);
  const bool per_expert = rng.below(2) == 1;
  const Matrix r = random_matrix(rows, d, 1.0, rng);
  std::vector<Matrix> inputs{random_matrix(rows, d, 1.0, rng), random_matrix(rows, e, 1.0, rng)};
  const Index downs = per_expert ? e : 1;
  for (Index i = 0; i < downs; ++i) inputs.push_back(random_matrix(rank, d, 0.5, rng));
  for (Index i = 0; i < e; ++i) inputs.push_back(random_matrix(d, rank, 0.5, rng));
  return gradcheck_multi(
      [&](std::span<const Tensor> x) {
        const TopkSoftmaxResult g = topk_softmax_rows(x[1], k, 1.0);
        MopeAdapter adapter;
        adapter.instance_router = Tensor::constant(Matrix::Zero(e, d));
        adapter.patch_router = adapter.instance_router;
        adapter.top_k = k;
        for (Index i = 0; i < downs; ++i) adapter.down.push_back(x[static_cast<std::size_t>(2 + i)]);
        for (Index i = 0; i < e; ++i) adapter.up.push_back(x[static_cast<std::size_t>(2 + downs + i)]);
        return project(expert_apply(x[0], g.weights, g.selected, adapter).delta, r);
      },
      inputs);
}

/// Gate tensors for L layers over the same token rows, built from logits.
std::vector<Tensor> layer_gates(std::span<const Tensor> logits, Index k, double tau) {
  std::vector<Tensor> out;
  for (const Tensor& l : logits) out.push_back(topk_softmax_rows(l, k, tau).weights);
  return out;
}

double routing_loss_case(Rng& rng, const std::function<Tensor(std::span<const Tensor>)>& loss) {
  const Index layers = pick(1, 4, rng), rows = pick(2, 8, rng), e = pick(2, 8, rng);
  const Index k = pick(1, e, rng);
  std::vector<Matrix> inputs;
  for (Index l = 0; l < layers; ++l) inputs.push_back(random_matrix(rows, e, 1.0, rng));
  return gradcheck_multi(
      [&](std::span<const Tensor> x) {
        const auto gates = layer_gates(x, k, 1.0);
        return loss(gates);
      },
      inputs);
}

double classification_case(Rng& rng) {
  const Index b = pick(1, 5, rng), a = pick(2, 8, rng), c = pick(2, 6, rng);
  const double tau = 0.5 + 2.0 * rng.uniform();
  Matrix attrs(c, a);
  for (Index i = 0; i < attrs.size(); ++i) attrs.data()[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
  std::vector<Index> labels;
  for (Index i = 0; i < b; ++i) labels.push_back(pick(0, c - 1, rng));
  return gradcheck(
      [&](const Tensor& a_hat) { return classification_loss(class_scores(a_hat, attrs, tau), labels); },
      random_matrix(b, a, 1.0, rng));
}

double attribute_head_case(Rng& rng) {
  const Index b = pick(1, 2, rng), m = pick(3, 6, rng), d = pick(2, 6, rng), a = pick(2, 5, rng);
  const Index j = pick(1, m, rng);
  const Matrix r = random_matrix(b, a, 1.0, rng);
  const std::vector<Matrix> inputs{random_matrix(b * m, d, 1.0, rng), random_matrix(a, d, 0.5, rng),
                                   Matrix::Identity(m, m) + random_matrix(m, m, 0.1, rng)};
  return gradcheck_multi(
      [&](std::span<const Tensor> x) {
        const Tensor maps = attribute_transform(x[0], x[1], b);
        const TopjMaskResult masks =
            attribute_route(maps, {x[2]}, a, j, 1.0, GumbelMode::Hard, Matrix());
        return project(localize_pool(maps, masks.mask, static_cast<double>(j), b).a_hat, r);
      },
      inputs);
}

double encoder_case(Rng& rng) {
  BackboneConfig bb;
  bb.heads = pick(1, 2, rng);
  bb.width = bb.heads * pick(3, 4, rng);
  bb.mlp_ratio = 2;
  MopeConfig mc;
  mc.num_experts = pick(2, 5, rng);
  mc.top_k = pick(1, mc.num_experts, rng);
  mc.rank = 1;
  const Index b = pick(1, 2, rng), m = pick(2, 4, rng);
  EncoderLayer base = EncoderLayer::initialize(bb, mc, rng);
  const Matrix r = random_matrix(b * (1 + m), bb.width, 1.0, rng);
  std::vector<Matrix> inputs{random_matrix(b * (1 + m), bb.width, 1.0, rng), base.qkv_weight.value(),
                             base.ffn_in_weight.value(), base.adapter.patch_router.value(),
                             base.adapter.down.front().value()};
  for (const auto& u : base.adapter.up) inputs.push_back(random_matrix(u.rows(), u.cols(), 0.5, rng));
  return gradcheck_multi(
      [&](std::span<const Tensor> x) {
        EncoderLayer layer = base;
        layer.qkv_weight = x[1];
        layer.ffn_in_weight = x[2];
        layer.adapter.patch_router = x[3];
        layer.adapter.down = {x[4]};
        layer.adapter.up.assign(x.begin() + 5, x.end());
        const std::vector<EncoderLayer> layers{layer};
        const EncoderOutput out = encoder_forward(x[0], layers, b, EncoderOptions{bb.heads, bb.ln_eps, true});
        return project(out.tokens, r);
      },
      inputs);
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck_suite(Index instances, std::uint64_t seed) {
  const std::vector<std::pair<std::string, Case>> cases{
      {"gate", gate_case},
      {"expert_update", expert_case},
      {"classification", classification_case},
      {"load_balance",
       [](Rng& rng) { return routing_loss_case(rng, [](std::span<const Tensor> g) { return load_balance_loss(g); }); }},
      {"consistency",
       [](Rng& rng) { return routing_loss_case(rng, [](std::span<const Tensor> g) { return consistency_loss(g); }); }},
      {"diversity",
       [](Rng& rng) { return routing_loss_case(rng, [](std::span<const Tensor> g) { return diversity_loss(g); }); }},
      {"attribute_head", attribute_head_case},
      {"encoder_layer", encoder_case},
  };
  const Rng root(seed, 0x67726164);  // "grad"
  std::vector<GradcheckResult> results;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    GradcheckResult res{cases[c].first, instances, 0.0};
    for (Index i = 0; i < instances; ++i) {
      Rng rng = root.substream(static_cast<std::uint64_t>(c) * 1000003u + static_cast<std::uint64_t>(i));
      res.max_error = std::max(res.max_error, cases[c].second(rng));
    }
    results.push_back(std::move(res));
  }
  return results;
}

}  // namespace acr
