#include "acr/mope.hpp"

#include <gtest/gtest.h>

#include "acr/error.hpp"
#include "acr/kernels.hpp"

namespace acr {
namespace {

Matrix random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

MopeAdapter random_adapter(Index e, Index d, Index r, Index k, bool per_expert, Rng& rng) {
  MopeConfig mc;
  mc.num_experts = e;
  mc.rank = r;
  mc.top_k = k;
  mc.per_expert_down = per_expert;
  MopeAdapter a = MopeAdapter::initialize(mc, d, rng);
  for (auto& u : a.up) u = Tensor::constant(random_matrix(d, r, rng));
  return a;
}

TEST(MopeInit, UpProjectionsStartAtZero) {
  Rng rng(1);
  MopeConfig mc;
  const MopeAdapter a = MopeAdapter::initialize(mc, 64, rng);
  EXPECT_EQ(a.num_experts(), 20);
  EXPECT_EQ(a.rank(), 4);
  EXPECT_TRUE(a.shared_down());
  for (const auto& u : a.up) EXPECT_EQ(u.value().cwiseAbs().maxCoeff(), 0.0);
}

TEST(MopeInit, SkewedRoutersZeroAllButLeadingRows) {
  Rng rng(2);
  MopeConfig mc;
  mc.router_init = RouterInit::Skewed;
  mc.skew_experts = 2;
  const MopeAdapter a = MopeAdapter::initialize(mc, 64, rng);
  EXPECT_GT(a.patch_router.value().topRows(2).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(a.patch_router.value().bottomRows(18).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(a.instance_router.value().bottomRows(18).cwiseAbs().maxCoeff(), 0.0);
}

TEST(MopeConfig, RejectsBadHyperparameters) {
  MopeConfig mc;
  EXPECT_NO_THROW(mc.validate(64));
  mc.rank = 32;
  EXPECT_THROW(mc.validate(64), ArgumentError);
  mc = MopeConfig{};
  mc.top_k = 21;
  EXPECT_THROW(mc.validate(64), ArgumentError);
  mc = MopeConfig{};
  mc.alpha = 1.5;
  EXPECT_THROW(mc.validate(64), ArgumentError);
}

TEST(Routing, ZeroTokensGiveZeroLogits) {
  Rng rng(3);
  const Tensor r = Tensor::constant(random_matrix(5, 4, rng));
  EXPECT_EQ(instance_route(Tensor::constant(Matrix::Zero(2, 4)), r).value(), Matrix::Zero(2, 5));
  EXPECT_EQ(patch_route(Tensor::constant(Matrix::Zero(3, 4)), r).value(), Matrix::Zero(3, 5));
}

TEST(Routing, RouteIsLinearInTokens) {
  Rng rng(4);
  const Tensor r = Tensor::constant(random_matrix(5, 4, rng));
  const Matrix x = random_matrix(3, 4, rng);
  EXPECT_LT((patch_route(Tensor::constant(x), r).value() - x * r.value().transpose()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Gate, BlendedExample) {
  const Tensor u = Tensor::constant((Matrix(1, 4) << 1, 0, 0, 0).finished());
  const Tensor v = Tensor::constant((Matrix(1, 4) << 0, 1, 0, 0).finished());
  const TopkSoftmaxResult g = gate(u, v, 0.5, 2, 1.0);
  const Matrix expected = (Matrix(1, 4) << 0.5, 0.5, 0, 0).finished();
  EXPECT_LT((g.weights.value() - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Gate, InstanceOnlyRoutingIsSharedAcrossPatches) {
  Rng rng(5);
  const Tensor u = Tensor::constant(random_matrix(2, 6, rng));
  const Tensor v = Tensor::constant(random_matrix(2 * 4, 6, rng));
  const TopkSoftmaxResult g = gate(u, v, 0.0, 2, 1.0);
  for (Index b = 0; b < 2; ++b) {
    for (Index m = 1; m < 4; ++m) EXPECT_EQ(g.weights.value().row(b * 4 + m), g.weights.value().row(b * 4));
  }
}

TEST(Gate, PatchOnlyRoutingIgnoresInstance) {
  Rng rng(6);
  const Tensor v = Tensor::constant(random_matrix(3, 5, rng));
  const TopkSoftmaxResult a = gate(Tensor::constant(random_matrix(1, 5, rng)), v, 1.0, 3, 1.0);
  const TopkSoftmaxResult b = gate(Tensor::constant(random_matrix(1, 5, rng)), v, 1.0, 3, 1.0);
  EXPECT_EQ(a.weights.value(), b.weights.value());
}

TEST(Gate, RowsHaveExactlyKNonzerosSummingToOne) {
  Rng rng(7);
  const TopkSoftmaxResult g =
      gate(Tensor::constant(random_matrix(2, 8, rng)), Tensor::constant(random_matrix(6, 8, rng)), 0.5, 3, 1.0);
  for (Index i = 0; i < 6; ++i) {
    EXPECT_EQ((g.weights.value().row(i).array() != 0.0).count(), 3);
    EXPECT_NEAR(g.weights.value().row(i).sum(), 1.0, 1e-12);
  }
}

TEST(Gate, RejectsBadAlpha) {
  const Tensor u = Tensor::constant(Matrix::Zero(1, 3));
  EXPECT_THROW(gate(u, u, -0.1, 1, 1.0), ArgumentError);
}

TEST(ExpertApply, ZeroUpProjectionGivesZeroDelta) {
  Rng rng(8);
  MopeConfig mc;
  mc.num_experts = 4;
  mc.rank = 2;
  const MopeAdapter a = MopeAdapter::initialize(mc, 8, rng);
  const Tensor x = Tensor::constant(random_matrix(5, 8, rng));
  const TopkSoftmaxResult g = topk_softmax_rows(Tensor::constant(random_matrix(5, 4, rng)), 2, 1.0);
  EXPECT_EQ(expert_apply(x, g.weights, g.selected, a).delta.value(), Matrix::Zero(5, 8));
}

TEST(ExpertApply, SingleExpertIsItsLoraUpdate) {
  Rng rng(9);
  const MopeAdapter a = random_adapter(3, 8, 2, 1, false, rng);
  const Matrix x = random_matrix(4, 8, rng);
  const TopkSoftmaxResult g = topk_softmax_rows(Tensor::constant(random_matrix(4, 3, rng)), 1, 1.0);
  const Matrix delta = expert_apply(Tensor::constant(x), g.weights, g.selected, a).delta.value();
  for (Index i = 0; i < 4; ++i) {
    const Index e = g.selected[static_cast<std::size_t>(i)].front();
    const RowVector expected =
        x.row(i) * a.down.front().value().transpose() * a.up[static_cast<std::size_t>(e)].value().transpose();
    EXPECT_LT((delta.row(i) - expected).cwiseAbs().maxCoeff(), 1e-12);
  }
}

// Evaluates every expert densely, then masks and renormalizes.
Matrix dense_oracle(const Matrix& x, const Matrix& gates, const MopeAdapter& a) {
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double total = gates.row(i).sum();
    for (Index e = 0; e < a.num_experts(); ++e) {
      const Matrix& down = a.down[a.shared_down() ? 0 : static_cast<std::size_t>(e)].value();
      const RowVector y = x.row(i) * down.transpose() * a.up[static_cast<std::size_t>(e)].value().transpose();
      out.row(i) += (gates(i, e) / total) * y;
    }
  }
  return out;
}

TEST(ExpertApply, MatchesDenseOracle) {
  Rng rng(10);
  for (bool per_expert : {false, true}) {
    const MopeAdapter a = random_adapter(6, 10, 3, 3, per_expert, rng);
    const Matrix x = random_matrix(7, 10, rng);
    const TopkSoftmaxResult g = topk_softmax_rows(Tensor::constant(random_matrix(7, 6, rng)), 3, 1.0);
    const ExpertUpdate up = expert_apply(Tensor::constant(x), g.weights, g.selected, a);
    EXPECT_LT((up.delta.value() - dense_oracle(x, g.weights.value(), a)).cwiseAbs().maxCoeff(), 1e-12);
    for (Index c : up.up_projection_calls) EXPECT_EQ(c, 3);
  }
}

TEST(MopeLayer, UpProjectionCallsBoundedByKM) {
  Rng rng(11);
  const Index batch = 3, m = 16, d = 16, k = 2;
  MopeAdapter a = random_adapter(20, d, 4, k, false, rng);
  a.instance_router = Tensor::constant(random_matrix(20, d, rng));
  a.patch_router = Tensor::constant(random_matrix(20, d, rng));
  const MopeOutput out = mope_layer(Tensor::constant(random_matrix(batch * (1 + m), d, rng)), a, batch, 0);
  ASSERT_EQ(out.record.up_projection_calls.size(), static_cast<std::size_t>(batch));
  for (Index c : out.record.up_projection_calls) EXPECT_LE(c, k * m);
  EXPECT_EQ(out.record.tokens_per_image, m);
  EXPECT_EQ(out.record.batch(), batch);
}

TEST(MopeLayer, ClsRowsAreUntouched) {
  Rng rng(12);
  const Index batch = 2, m = 4, d = 8;
  const MopeAdapter a = random_adapter(4, d, 2, 2, false, rng);
  const Matrix delta = mope_layer(Tensor::constant(random_matrix(batch * (1 + m), d, rng)), a, batch, 0).delta.value();
  for (Index b = 0; b < batch; ++b) EXPECT_EQ(delta.row(b * (1 + m)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(delta.cwiseAbs().maxCoeff(), 0.0);
}

TEST(MopeLayer, SingleExpertReducesToPlainLora) {
  Rng rng(13);
  const Index m = 3, d = 8;
  const MopeAdapter a = random_adapter(1, d, 2, 1, false, rng);
  const Matrix x = random_matrix(1 + m, d, rng);
  const MopeOutput out = mope_layer(Tensor::constant(x), a, 1, 0);
  const Matrix lora = x.bottomRows(m) * a.down.front().value().transpose() * a.up.front().value().transpose();
  EXPECT_LT((out.delta.value().bottomRows(m) - lora).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(out.record.gates.value(), Matrix::Ones(m, 1));
}

TEST(MopeLayer, PermutingPatchesPermutesDelta) {
  Rng rng(14);
  const Index m = 5, d = 8;
  const MopeAdapter a = random_adapter(6, d, 2, 2, false, rng);
  const Matrix x = random_matrix(1 + m, d, rng);
  const std::vector<Index> perm{0, 4, 2, 5, 1, 3};
  Matrix xp(1 + m, d);
  for (Index i = 0; i <= m; ++i) xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
  const Matrix y = mope_layer(Tensor::constant(x), a, 1, 0).delta.value();
  const Matrix yp = mope_layer(Tensor::constant(xp), a, 1, 0).delta.value();
  for (Index i = 0; i <= m; ++i) {
    EXPECT_LT((yp.row(i) - y.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(RoutingRecord, ImageGatesSlicesRows) {
  Rng rng(15);
  const MopeAdapter a = random_adapter(4, 8, 2, 2, false, rng);
  const MopeOutput out = mope_layer(Tensor::constant(random_matrix(2 * 4, 8, rng)), a, 2, 1);
  EXPECT_EQ(out.record.layer, 1);
  EXPECT_EQ(out.record.image_gates(1), out.record.gates.value().bottomRows(3));
  EXPECT_THROW(out.record.image_gates(2), ArgumentError);
}

}  // namespace
}  // namespace acr
