#pragma once

// Differentiable operations on Tensor. Shapes follow Eigen conventions:
// a Tensor is rows x cols and elementwise ops require identical shapes
// unless `broadcast` is used explicitly.

#include <span>
#include <vector>

#include "acr/rng.hpp"
#include "acr/tensor.hpp"

namespace acr {

// -- linear algebra -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// -- elementwise --------------------------------------------------------------

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);
Tensor operator*(double s, const Tensor& a);
Tensor hadamard(const Tensor& a, const Tensor& b);
/// Elementwise a / b.
Tensor divide(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor log(const Tensor& a);
/// log(max(a, floor)); zero gradient where the floor is active.
Tensor log_floor(const Tensor& a, double floor);
/// Square root with zero subgradient at 0.
Tensor sqrt(const Tensor& a);
/// a * log(a) with the 0 log 0 = 0 convention (zero subgradient at 0).
Tensor xlogx(const Tensor& a);
Tensor square(const Tensor& a);
Tensor gelu(const Tensor& a);

// -- shape --------------------------------------------------------------------

/// Broadcasts a 1x1, 1xC or Rx1 tensor to rows x cols.
Tensor broadcast(const Tensor& a, Index rows, Index cols);
/// Row-major reinterpretation; size must match.
Tensor reshape(const Tensor& a, Index rows, Index cols);
Tensor gather_rows(const Tensor& a, std::span<const Index> rows);
/// Places row i of `a` at output row `rows[i]`; other rows are zero.
Tensor scatter_rows(const Tensor& a, std::span<const Index> rows, Index total_rows);
/// Repeats each row `times` times consecutively: row r lands at r*times .. r*times+times-1.
Tensor repeat_rows(const Tensor& a, Index times);
Tensor concat_rows(std::span<const Tensor> parts);
/// Treats `a` as `blocks` stacked (R x C) blocks and transposes each: (blocks*R) x C -> (blocks*C) x R.
Tensor block_transpose(const Tensor& a, Index blocks);

// -- reductions ---------------------------------------------------------------

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Mean over rows: R x C -> 1 x C.
Tensor mean_rows(const Tensor& a);
/// Sum over columns: R x C -> R x 1.
Tensor sum_cols(const Tensor& a);

// -- normalization and attention ---------------------------------------------

/// Row-wise layer norm with per-column gain and bias (both 1 x C).
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-6);
Tensor softmax_rows(const Tensor& a);
/// Mean cross-entropy of softmax(scores) at `labels` (one label per row).
Tensor cross_entropy(const Tensor& scores, std::span<const Index> labels);

/// Multi-head self-attention core. `qkv` is (batch*tokens) x 3d laid out as
/// [Q | K | V]; returns (batch*tokens) x d with heads concatenated.
Tensor multi_head_attention(const Tensor& qkv, Index batch, Index tokens, Index heads);

// -- routing ------------------------------------------------------------------

/// Per-row support of a sparse routing or mask op.
using Selection = std::vector<std::vector<Index>>;

struct TopkSoftmaxResult {
  Tensor weights;
  Selection selected;  // per row, descending by logit
};

/// Row-wise masked_softmax(topk_mask(row, k), tau). Entries off the top-k
/// are exactly zero and receive no gradient.
TopkSoftmaxResult topk_softmax_rows(const Tensor& logits, Index k, double tau);

enum class GumbelMode {
  Soft,             ///< softmax((logits + G) / tau), differentiable
  StraightThrough,  ///< forward one-hot at argmax(logits + G); backward through the soft sample
  Hard,             ///< one-hot at argmax(logits), no noise, no gradient
};

/// Straight-through Gumbel over a 1 x M row of logits.
Tensor gumbel_st(const Tensor& logits, double tau, GumbelMode mode, Rng& rng);

struct TopjMaskResult {
  Tensor mask;
  Selection selected;
};

/// Row-wise top-j selection mask with straight-through Gumbel relaxation.
///
/// Hard mode: indicator of the top-j logits (ties to the lowest index), no
/// noise. StraightThrough: the j winners of logits + noise are selected; the
/// forward value is their indicator while the backward pass differentiates
/// j * softmax(topk_mask(logits + noise, j) / tau). Soft mode returns that
/// relaxation as the forward value too. `noise` has the shape of `logits`
/// and is ignored in Hard mode.
TopjMaskResult gumbel_topj_rows(const Tensor& logits, Index j, double tau, GumbelMode mode,
                                const Matrix& noise);

}  // namespace acr
