#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "acr/matrix.hpp"

namespace acr {

class Tensor;

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

using NodePtr = std::shared_ptr<Node>;

}  // namespace detail

/// Dense real64 matrix with reverse-mode gradient tracking.
///
/// A Tensor is a cheap handle to a graph node; copies alias the same node.
/// Every tensor is two-dimensional (rows x cols); vectors are 1 x n rows.
/// Values are immutable once an op has produced them; only leaves created
/// with `parameter()` may be updated in place by an optimizer.
class Tensor {
 public:
  using BackwardFn = std::function<void(detail::Node&)>;

  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
  static Tensor parameter(Matrix value) { return Tensor(std::move(value), true); }
  static Tensor scalar(double v);

  /// Wraps an op result. `backward` receives the result node after its grad
  /// is final and must accumulate into the parents via `accumulate_grad`.
  static Tensor from_op(Matrix value, std::vector<Tensor> parents, BackwardFn backward);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const;
  Matrix& mutable_value();
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  std::vector<Index> shape() const { return {rows(), cols()}; }
  double item() const;

  bool requires_grad() const;
  bool has_grad() const;
  /// Gradient, or a zero matrix of the value's shape when none accumulated.
  Matrix grad() const;
  void zero_grad();

  /// Seeds d(this)/d(this) = 1 and runs reverse mode over the graph.
  /// Each reachable node's backward closure runs exactly once.
  void backward() const;

  /// Detached copy of the value (no history).
  Tensor detach() const { return constant(value()); }

  const detail::NodePtr& node() const { return node_; }

 private:
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
  detail::NodePtr node_;
};

/// Adds `delta` into the gradient of `parent` if it tracks gradients.
template <typename Derived>
void accumulate_grad(const detail::NodePtr& parent, const Eigen::MatrixBase<Derived>& delta) {
  if (!parent->requires_grad) return;
  if (parent->grad.size() == 0) {
    parent->grad = delta;
  } else {
    parent->grad += delta;
  }
}

/// Number of nodes visited by the most recent backward() on this thread.
std::size_t last_backward_visit_count();

}  // namespace acr
