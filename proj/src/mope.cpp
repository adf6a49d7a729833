#include "acr/mope.hpp"

#include <cmath>
#include <memory>

#include "acr/error.hpp"

namespace acr {

namespace {

Matrix gaussian(Index rows, Index cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
  return m;
}

Matrix router_weights(const MopeConfig& config, Index width, Rng& rng) {
  const double stddev = 1.0 / std::sqrt(static_cast<double>(width));
  Matrix w = gaussian(config.num_experts, width, stddev, rng);
  if (config.router_init == RouterInit::Skewed) w.bottomRows(config.num_experts - config.skew_experts).setZero();
  return w;
}

}  // namespace

void MopeConfig::validate(Index width) const {
  if (num_experts < 1) throw ArgumentError("mope: num_experts must be positive");
  if (top_k < 1 || top_k > num_experts) throw ArgumentError("mope: top_k must lie in [1, num_experts]");
  if (rank < 1 || 2 * rank >= width) throw ArgumentError("mope: lora rank must satisfy 1 <= r < d/2");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("mope: alpha must lie in [0, 1]");
  if (!(tau > 0.0)) throw ArgumentError("mope: tau must be positive");
  if (router_init == RouterInit::Skewed && (skew_experts < 1 || skew_experts > num_experts)) {
    throw ArgumentError("mope: skew_experts must lie in [1, num_experts]");
  }
}

void MopeAdapter::validate() const {
  const Index e = num_experts();
  const Index d = width();
  if (patch_router.rows() != e || patch_router.cols() != d) throw ArgumentError("mope: router shapes differ");
  if (static_cast<Index>(up.size()) != e) throw ArgumentError("mope: one up-projection per expert required");
  if (down.size() != 1 && static_cast<Index>(down.size()) != e) {
    throw ArgumentError("mope: down-projection must be shared or per expert");
  }
  const Index r = rank();
  if (2 * r >= d) throw ArgumentError("mope: lora rank must satisfy r < d/2");
  for (const auto& a : down) {
    if (a.rows() != r || a.cols() != d) throw ArgumentError("mope: down-projection shape");
  }
  for (const auto& b : up) {
    if (b.rows() != d || b.cols() != r) throw ArgumentError("mope: up-projection shape");
  }
  if (top_k < 1 || top_k > e) throw ArgumentError("mope: top_k must lie in [1, E]");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("mope: alpha must lie in [0, 1]");
  if (!(tau > 0.0)) throw ArgumentError("mope: tau must be positive");
}

MopeAdapter MopeAdapter::initialize(const MopeConfig& config, Index width, Rng& rng) {
  config.validate(width);
  MopeAdapter adapter;
  adapter.instance_router = Tensor::parameter(router_weights(config, width, rng));
  adapter.patch_router = Tensor::parameter(router_weights(config, width, rng));
  const Index n_down = config.per_expert_down ? config.num_experts : 1;
  const double stddev = 1.0 / std::sqrt(static_cast<double>(width));
  for (Index i = 0; i < n_down; ++i) adapter.down.push_back(Tensor::parameter(gaussian(config.rank, width, stddev, rng)));
  for (Index i = 0; i < config.num_experts; ++i) {
    adapter.up.push_back(Tensor::parameter(Matrix::Zero(width, config.rank)));
  }
  adapter.alpha = config.alpha;
  adapter.top_k = config.top_k;
  adapter.tau = config.tau;
  return adapter;
}

Matrix RoutingRecord::image_gates(Index image) const {
  if (image < 0 || image >= batch()) throw ArgumentError("RoutingRecord: image index out of range");
  return gates.value().middleRows(image * tokens_per_image, tokens_per_image);
}

Tensor instance_route(const Tensor& cls_tokens, const Tensor& instance_router) {
  return matmul_nt(cls_tokens, instance_router);
}

Tensor patch_route(const Tensor& patch_tokens, const Tensor& patch_router) {
  return matmul_nt(patch_tokens, patch_router);
}

TopkSoftmaxResult gate(const Tensor& u, const Tensor& v, double alpha, Index k, double tau) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("gate: alpha must lie in [0, 1]");
  if (u.cols() != v.cols() || u.rows() == 0 || v.rows() % u.rows() != 0) {
    throw ArgumentError("gate: instance and patch logits are incompatible");
  }
  const Tensor blended = (1.0 - alpha) * repeat_rows(u, v.rows() / u.rows()) + alpha * v;
  return topk_softmax_rows(blended, k, tau);
}

ExpertUpdate expert_apply(const Tensor& tokens, const Tensor& gates, const Selection& selected,
                          const MopeAdapter& adapter) {
  const Matrix& h = tokens.value();
  const Matrix& w = gates.value();
  const Index n = h.rows();
  const Index d = adapter.width();
  const Index num_experts = adapter.num_experts();
  if (h.cols() != d || w.rows() != n || w.cols() != num_experts || static_cast<Index>(selected.size()) != n) {
    throw ArgumentError("expert_apply: shape mismatch");
  }
  const bool shared = adapter.shared_down();

  // Renormalized weights over each row's selected set, grouped by expert.
  struct Route {
    std::vector<Index> rows;
    Vector weight;
    Matrix z;      // routed rows projected down (|rows| x r)
    Matrix y;      // expert outputs before weighting (|rows| x d)
  };
  auto routes = std::make_shared<std::vector<Route>>(static_cast<std::size_t>(num_experts));
  auto totals = std::make_shared<Vector>(n);
  std::vector<std::vector<double>> weights(static_cast<std::size_t>(num_experts));
  std::vector<Index> calls(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; ++i) {
    const auto& s = selected[static_cast<std::size_t>(i)];
    double total = 0;
    for (Index e : s) total += w(i, e);
    if (s.empty() || !(total > 0.0)) throw DegenerateInputError("expert_apply: empty expert selection");
    (*totals)(i) = total;
    for (Index e : s) {
      (*routes)[static_cast<std::size_t>(e)].rows.push_back(i);
      weights[static_cast<std::size_t>(e)].push_back(w(i, e) / total);
    }
  }

  Matrix z_shared;
  if (shared) z_shared = h * adapter.down.front().value().transpose();
  Matrix delta = Matrix::Zero(n, d);
  for (Index e = 0; e < num_experts; ++e) {
    Route& route = (*routes)[static_cast<std::size_t>(e)];
    if (route.rows.empty()) continue;
    const auto& wv = weights[static_cast<std::size_t>(e)];
    route.weight = Eigen::Map<const Vector>(wv.data(), static_cast<Index>(wv.size()));
    const Index count = static_cast<Index>(route.rows.size());
    route.z.resize(count, adapter.rank());
    for (Index i = 0; i < count; ++i) {
      const Index row = route.rows[static_cast<std::size_t>(i)];
      if (shared) {
        route.z.row(i) = z_shared.row(row);
      } else {
        route.z.row(i) = h.row(row) * adapter.down[static_cast<std::size_t>(e)].value().transpose();
      }
    }
    // one up-projection matvec per routed (row, expert) pair
    route.y = route.z * adapter.up[static_cast<std::size_t>(e)].value().transpose();
    for (Index i = 0; i < count; ++i) {
      const Index row = route.rows[static_cast<std::size_t>(i)];
      delta.row(row) += route.weight(i) * route.y.row(i);
      ++calls[static_cast<std::size_t>(row)];
    }
  }

  std::vector<Tensor> parents{tokens, gates};
  for (const auto& a : adapter.down) parents.push_back(a);
  for (const auto& b : adapter.up) parents.push_back(b);
  auto sel = std::make_shared<const Selection>(selected);
  Tensor out = Tensor::from_op(std::move(delta), std::move(parents), [routes, totals, sel, shared, num_experts](detail::Node& self) {
    const Matrix& g = self.grad;
    const auto& h_node = self.parents[0];
    const auto& w_node = self.parents[1];
    const std::size_t down_offset = 2;
    const std::size_t up_offset = down_offset + (shared ? 1 : static_cast<std::size_t>(num_experts));
    const Matrix& hv = h_node->value;
    const Index n_rows = hv.rows();

    Matrix d_hat = Matrix::Zero(n_rows, num_experts);
    Matrix dz_shared;
    if (shared) dz_shared = Matrix::Zero(n_rows, self.parents[down_offset]->value.rows());
    Matrix dh = Matrix::Zero(n_rows, hv.cols());

    for (Index e = 0; e < num_experts; ++e) {
      const Route& route = (*routes)[static_cast<std::size_t>(e)];
      if (route.rows.empty()) continue;
      const Index count = static_cast<Index>(route.rows.size());
      Matrix g_sub(count, g.cols());
      for (Index i = 0; i < count; ++i) g_sub.row(i) = g.row(route.rows[static_cast<std::size_t>(i)]);
      for (Index i = 0; i < count; ++i) {
        d_hat(route.rows[static_cast<std::size_t>(i)], e) = g_sub.row(i).dot(route.y.row(i));
      }
      const Matrix g_weighted = route.weight.asDiagonal() * g_sub;
      const auto& up_node = self.parents[up_offset + static_cast<std::size_t>(e)];
      accumulate_grad(up_node, g_weighted.transpose() * route.z);
      const Matrix dz = g_weighted * up_node->value;
      if (shared) {
        for (Index i = 0; i < count; ++i) dz_shared.row(route.rows[static_cast<std::size_t>(i)]) += dz.row(i);
      } else {
        const auto& down_node = self.parents[down_offset + static_cast<std::size_t>(e)];
        const Matrix dh_sub = dz * down_node->value;
        Matrix h_sub(count, hv.cols());
        for (Index i = 0; i < count; ++i) {
          const Index row = route.rows[static_cast<std::size_t>(i)];
          dh.row(row) += dh_sub.row(i);
          h_sub.row(i) = hv.row(row);
        }
        accumulate_grad(down_node, dz.transpose() * h_sub);
      }
    }
    if (shared) {
      const auto& down_node = self.parents[down_offset];
      dh += dz_shared * down_node->value;
      accumulate_grad(down_node, dz_shared.transpose() * hv);
    }
    accumulate_grad(h_node, dh);

    if (w_node->requires_grad) {
      const Matrix& wv = w_node->value;
      Matrix dw = Matrix::Zero(wv.rows(), wv.cols());
      for (Index i = 0; i < n_rows; ++i) {
        const auto& s = (*sel)[static_cast<std::size_t>(i)];
        const double total = (*totals)(i);
        double inner = 0;
        for (Index e : s) inner += (wv(i, e) / total) * d_hat(i, e);
        for (Index e : s) dw(i, e) = (d_hat(i, e) - inner) / total;
      }
      accumulate_grad(w_node, dw);
    }
  });
  return {std::move(out), std::move(calls)};
}

MopeOutput mope_layer(const Tensor& tokens, const MopeAdapter& adapter, Index batch, Index layer_index) {
  if (batch < 1 || tokens.rows() % batch != 0) throw ArgumentError("mope_layer: rows not divisible by batch");
  const Index seq = tokens.rows() / batch;
  const Index m = seq - 1;
  if (m < 1) throw ArgumentError("mope_layer: need at least one patch token");
  std::vector<Index> cls_rows;
  std::vector<Index> patch_rows;
  for (Index b = 0; b < batch; ++b) {
    cls_rows.push_back(b * seq);
    for (Index p = 1; p < seq; ++p) patch_rows.push_back(b * seq + p);
  }
  const Tensor cls = gather_rows(tokens, cls_rows);
  const Tensor patches = gather_rows(tokens, patch_rows);
  const Tensor u = instance_route(cls, adapter.instance_router);
  const Tensor v = patch_route(patches, adapter.patch_router);
  TopkSoftmaxResult routed = gate(u, v, adapter.alpha, adapter.top_k, adapter.tau);
  ExpertUpdate update = expert_apply(patches, routed.weights, routed.selected, adapter);

  MopeOutput out;
  out.delta = scatter_rows(update.delta, patch_rows, tokens.rows());
  out.record.layer = layer_index;
  out.record.tokens_per_image = m;
  out.record.gates = routed.weights;
  out.record.selected = std::move(routed.selected);
  out.record.instance_logits = u.value();
  out.record.up_projection_calls.assign(static_cast<std::size_t>(batch), 0);
  for (Index r = 0; r < static_cast<Index>(update.up_projection_calls.size()); ++r) {
    out.record.up_projection_calls[static_cast<std::size_t>(r / m)] += update.up_projection_calls[static_cast<std::size_t>(r)];
  }
  return out;
}

}  // namespace acr
