#include "acr/tensor.hpp"

#include <unordered_set>
#include <utility>

#include "acr/error.hpp"

namespace acr {

namespace {
thread_local std::size_t backward_visits = 0;
}

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Tensor Tensor::from_op(Matrix value, std::vector<Tensor> parents, BackwardFn backward) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  for (const auto& p : parents) {
    if (p.defined() && p.node_->requires_grad) node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

const Matrix& Tensor::value() const {
  if (!node_) throw ArgumentError("Tensor: use of undefined tensor");
  return node_->value;
}

Matrix& Tensor::mutable_value() {
  if (!node_) throw ArgumentError("Tensor: use of undefined tensor");
  return node_->value;
}

double Tensor::item() const {
  if (value().size() != 1) throw ArgumentError("Tensor::item: tensor is not a scalar");
  return value()(0, 0);
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const { return node_ && node_->grad.size() != 0; }

Matrix Tensor::grad() const {
  if (has_grad()) return node_->grad;
  return Matrix::Zero(rows(), cols());
}

void Tensor::zero_grad() {
  if (node_) node_->grad.resize(0, 0);
}

void Tensor::backward() const {
  if (value().size() != 1) throw ArgumentError("Tensor::backward: output is not a scalar");
  backward_visits = 0;
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order of the tracked subgraph.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  accumulate_grad(node_, Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    ++backward_visits;
    if (node->backward && node->grad.size() != 0) node->backward(*node);
  }
}

std::size_t last_backward_visit_count() { return backward_visits; }

}  // namespace acr
