#include "acr/losses.hpp"

#include <cmath>

#include "acr/error.hpp"

namespace acr {

namespace {

std::vector<Tensor> gates_of(std::span<const RoutingRecord> records) {
  std::vector<Tensor> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.gates);
  return out;
}

void require_layers(std::span<const Tensor> layer_gates, const char* what) {
  if (layer_gates.empty()) throw ArgumentError(std::string(what) + ": no routing records");
  for (const auto& g : layer_gates) {
    if (g.rows() == 0) throw ArgumentError(std::string(what) + ": empty batch");
    if (g.rows() != layer_gates.front().rows() || g.cols() != layer_gates.front().cols()) {
      throw ArgumentError(std::string(what) + ": layers disagree on token count or expert count");
    }
  }
}

}  // namespace

void LossWeights::validate() const {
  if (!(lambda1 >= 0) || !(lambda2 >= 0) || !(lambda3 >= 0)) throw ArgumentError("loss weights must be nonnegative");
}

UsageStats usage_stats(const Matrix& gates) {
  if (gates.rows() == 0) throw ArgumentError("usage_stats: empty gate matrix");
  UsageStats s;
  const auto e = static_cast<double>(gates.cols());
  s.mean_gate = gates.colwise().mean();
  s.usage = e * s.mean_gate;
  s.mu = s.usage.mean();
  s.sigma = std::sqrt((s.usage.array() - s.mu).square().mean());
  return s;
}

Tensor classification_loss(const Tensor& scores, std::span<const Index> labels) { return cross_entropy(scores, labels); }

Tensor load_balance_loss(std::span<const Tensor> layer_gates, double eps) {
  require_layers(layer_gates, "load_balance_loss");
  Tensor total;
  for (const Tensor& gates : layer_gates) {
    const Index e = gates.cols();
    const Tensor usage = static_cast<double>(e) * mean_rows(gates);
    const Tensor mu = mean(usage);
    const Tensor centered = usage - broadcast(mu, 1, e);
    const Tensor sigma = sqrt(mean(square(centered)));
    const Tensor layer_loss = divide(sigma, add_scalar(mu, eps));
    total = total.defined() ? total + layer_loss : layer_loss;
  }
  return (1.0 / static_cast<double>(layer_gates.size())) * total;
}

Tensor load_balance_loss(std::span<const RoutingRecord> records, double eps) {
  const auto gates = gates_of(records);
  return load_balance_loss(std::span<const Tensor>(gates), eps);
}

Tensor consistency_loss(std::span<const Tensor> layer_gates, double eps) {
  require_layers(layer_gates, "consistency_loss");
  const auto layers = static_cast<double>(layer_gates.size());
  Tensor consensus = layer_gates.front();
  for (std::size_t l = 1; l < layer_gates.size(); ++l) consensus = consensus + layer_gates[l];
  consensus = (1.0 / layers) * consensus;
  const Tensor log_consensus = log_floor(consensus, eps);
  Tensor kl_total;
  for (const Tensor& p : layer_gates) {
    const Tensor kl = sum(xlogx(p) - hadamard(p, log_consensus));
    kl_total = kl_total.defined() ? kl_total + kl : kl;
  }
  // Every image has the same M, so the batch mean of per-image losses is the
  // mean over all (token, layer) pairs.
  const auto tokens = static_cast<double>(layer_gates.front().rows());
  return (1.0 / (tokens * layers)) * kl_total;
}

Tensor consistency_loss(std::span<const RoutingRecord> records, double eps) {
  const auto gates = gates_of(records);
  return consistency_loss(std::span<const Tensor>(gates), eps);
}

Tensor diversity_loss(std::span<const Tensor> layer_gates, double eps) {
  require_layers(layer_gates, "diversity_loss");
  Tensor total;
  for (const Tensor& w : layer_gates) {
    const Tensor neg_entropy = sum(hadamard(w, log(add_scalar(w, eps))));
    total = total.defined() ? total + neg_entropy : neg_entropy;
  }
  const auto tokens = static_cast<double>(layer_gates.front().rows());
  return (1.0 / (tokens * static_cast<double>(layer_gates.size()))) * total;
}

Tensor diversity_loss(std::span<const RoutingRecord> records, double eps) {
  const auto gates = gates_of(records);
  return diversity_loss(std::span<const Tensor>(gates), eps);
}

Tensor total_loss(const Tensor& cls, const Tensor& lb, const Tensor& cons, const Tensor& div, const LossWeights& weights) {
  weights.validate();
  Tensor total = cls;
  if (weights.lambda1 > 0) total = total + weights.lambda1 * lb;
  if (weights.lambda2 > 0) total = total + weights.lambda2 * cons;
  if (weights.lambda3 > 0) total = total + weights.lambda3 * div;
  return total;
}

}  // namespace acr
