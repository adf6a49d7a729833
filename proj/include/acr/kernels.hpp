#pragma once

// Value-level routing kernels. These operate on plain Eigen row vectors and
// are reused row-wise by the differentiable ops in ops.hpp.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "acr/error.hpp"
#include "acr/matrix.hpp"

namespace acr {

namespace detail {

template <typename Derived>
void check_no_nan_or_pos_inf(const Eigen::MatrixBase<Derived>& x, const char* what) {
  for (Index i = 0; i < x.size(); ++i) {
    const auto v = x(i);
    if (std::isnan(v) || v == std::numeric_limits<typename Derived::Scalar>::infinity()) {
      throw ArgumentError(std::string(what) + ": non-finite entry at index " + std::to_string(i));
    }
  }
}

}  // namespace detail

/// Indices of the `k` largest entries, in descending value order; ties go to
/// the lowest index. -inf entries rank below every finite entry.
template <typename Derived>
std::vector<Index> topk_indices(const Eigen::MatrixBase<Derived>& logits, Index k) {
  const Index n = logits.size();
  if (k < 1 || k > n) {
    throw ArgumentError("topk: k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  }
  detail::check_no_nan_or_pos_inf(logits, "topk");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Index a, Index b) {
    const auto va = logits(a);
    const auto vb = logits(b);
    return va > vb || (va == vb && a < b);
  });
  order.resize(static_cast<std::size_t>(k));
  return order;
}

/// Keeps the top-k entries and replaces the rest by -inf.
template <typename Derived>
RowVectorT<typename Derived::Scalar> topk_mask(const Eigen::MatrixBase<Derived>& logits, Index k) {
  using Scalar = typename Derived::Scalar;
  RowVectorT<Scalar> out = RowVectorT<Scalar>::Constant(logits.size(), neg_inf<Scalar>());
  for (Index i : topk_indices(logits, k)) out(i) = logits(i);
  return out;
}

/// softmax(x / tau) where -inf entries map to exactly zero.
template <typename Derived>
RowVectorT<typename Derived::Scalar> masked_softmax(const Eigen::MatrixBase<Derived>& masked_logits,
                                                    typename Derived::Scalar tau) {
  using Scalar = typename Derived::Scalar;
  if (!(tau > Scalar(0))) throw ArgumentError("masked_softmax: tau must be positive");
  detail::check_no_nan_or_pos_inf(masked_logits, "masked_softmax");
  const Index n = masked_logits.size();
  Scalar peak = neg_inf<Scalar>();
  for (Index i = 0; i < n; ++i) peak = std::max(peak, masked_logits(i) / tau);
  if (peak == neg_inf<Scalar>()) {
    throw DegenerateInputError("masked_softmax: every entry is masked");
  }
  RowVectorT<Scalar> out(n);
  Scalar total = 0;
  for (Index i = 0; i < n; ++i) {
    const Scalar x = masked_logits(i);
    out(i) = (x == neg_inf<Scalar>()) ? Scalar(0) : std::exp(x / tau - peak);
    total += out(i);
  }
  out /= total;
  return out;
}

/// First index of the maximum entry.
template <typename Derived>
Index argmax(const Eigen::MatrixBase<Derived>& x) {
  if (x.size() == 0) throw ArgumentError("argmax: empty input");
  Index best = 0;
  for (Index i = 1; i < x.size(); ++i) {
    if (x(i) > x(best)) best = i;
  }
  return best;
}

/// Harmonic mean of seen and unseen accuracy; zero when both are zero.
template <typename Scalar>
Scalar harmonic_mean(Scalar seen, Scalar unseen) {
  const Scalar denom = seen + unseen;
  return denom > Scalar(0) ? Scalar(2) * seen * unseen / denom : Scalar(0);
}

}  // namespace acr
