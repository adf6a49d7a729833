#include "acr/moae.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "acr/error.hpp"

namespace acr {
namespace {

Matrix random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

TEST(AttributeTransform, ZeroTokensGiveZeroMaps) {
  Rng rng(1);
  const Tensor maps =
      attribute_transform(Tensor::constant(Matrix::Zero(2 * 4, 6)), Tensor::constant(random_matrix(3, 6, rng)), 2);
  EXPECT_EQ(maps.value(), Matrix::Zero(2 * 3, 4));
}

TEST(AttributeTransform, IdentityTransformTransposesTokens) {
  Rng rng(2);
  const Index batch = 2, m = 5, d = 3;
  const Matrix h = random_matrix(batch * m, d, rng);
  const Matrix maps =
      attribute_transform(Tensor::constant(h), Tensor::constant(Matrix::Identity(d, d)), batch).value();
  ASSERT_EQ(maps.rows(), batch * d);
  for (Index b = 0; b < batch; ++b) {
    EXPECT_EQ(maps.middleRows(b * d, d), h.middleRows(b * m, m).transpose());
  }
}

TEST(AttributeTransform, ColumnIsTransformTimesToken) {
  Rng rng(3);
  const Matrix h = random_matrix(4, 6, rng), w = random_matrix(3, 6, rng);
  const Matrix maps = attribute_transform(Tensor::constant(h), Tensor::constant(w), 1).value();
  for (Index m = 0; m < 4; ++m) {
    EXPECT_LT((maps.col(m) - w * h.row(m).transpose()).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(AttributeRoute, IdentityRouterHardPicksStrongestPatches) {
  const Tensor maps = Tensor::constant((Matrix(1, 3) << 0.1, 0.9, 0.3).finished());
  const TopjMaskResult one = attribute_route(maps, {Tensor::constant(Matrix::Identity(3, 3))}, 1, 1, 1.0,
                                             GumbelMode::Hard, Matrix());
  EXPECT_EQ(one.mask.value(), (Matrix(1, 3) << 0, 1, 0).finished());
  const TopjMaskResult two = attribute_route(maps, {Tensor::constant(Matrix::Identity(3, 3))}, 1, 2, 1.0,
                                             GumbelMode::Hard, Matrix());
  EXPECT_EQ(two.mask.value(), (Matrix(1, 3) << 0, 1, 1).finished());
  EXPECT_EQ(two.selected.front(), (std::vector<Index>{1, 2}));
}

TEST(AttributeRoute, FullSelectionIsAllOnes) {
  Rng rng(4);
  const Tensor maps = Tensor::constant(random_matrix(6, 5, rng));
  const Matrix noise = random_matrix(6, 5, rng);
  for (GumbelMode mode : {GumbelMode::Hard, GumbelMode::StraightThrough}) {
    const TopjMaskResult r =
        attribute_route(maps, {Tensor::constant(random_matrix(5, 5, rng))}, 3, 5, 1.0, mode, noise);
    EXPECT_EQ(r.mask.value(), Matrix::Ones(6, 5));
  }
}

TEST(AttributeRoute, PerAttributeRoutersApplyToTheirRows) {
  Rng rng(5);
  const Index batch = 2, a = 2, m = 4;
  const Matrix maps = random_matrix(batch * a, m, rng);
  const std::vector<Tensor> routers{Tensor::constant(Matrix::Identity(m, m)), Tensor::constant(-Matrix::Identity(m, m))};
  const TopjMaskResult r = attribute_route(Tensor::constant(maps), routers, a, 1, 1.0, GumbelMode::Hard, Matrix());
  for (Index b = 0; b < batch; ++b) {
    Index hi = 0, lo = 0;
    maps.row(b * a).maxCoeff(&hi);
    maps.row(b * a + 1).minCoeff(&lo);
    EXPECT_EQ(r.selected[static_cast<std::size_t>(b * a)].front(), hi);
    EXPECT_EQ(r.selected[static_cast<std::size_t>(b * a + 1)].front(), lo);
  }
}

TEST(AttributeRoute, RejectsBadTopJ) {
  const Tensor maps = Tensor::constant(Matrix::Zero(1, 3));
  EXPECT_THROW(attribute_route(maps, {Tensor::constant(Matrix::Identity(3, 3))}, 1, 4, 1.0, GumbelMode::Hard, Matrix()),
               ArgumentError);
  EXPECT_THROW(attribute_route(maps, {}, 1, 1, 1.0, GumbelMode::Hard, Matrix()), ArgumentError);
}

TEST(LocalizePool, MeanOverSelectedPatches) {
  const Tensor maps = Tensor::constant((Matrix(2, 4) << 1, 2, 3, 4, -1, 0, 5, 2).finished());
  const Tensor masks = Tensor::constant((Matrix(2, 4) << 0, 1, 0, 1, 1, 0, 1, 0).finished());
  const PooledAttributes p = localize_pool(maps, masks, 2.0, 1);
  EXPECT_EQ(p.localized.value(), (Matrix(2, 4) << 0, 2, 0, 4, -1, 0, 5, 0).finished());
  EXPECT_EQ(p.a_hat.value(), (Matrix(1, 2) << 3, 2).finished());
}

TEST(LocalizePool, AllPatchesDivisorAndBatchLayout) {
  Rng rng(6);
  const Index batch = 3, a = 2, m = 4;
  const Matrix maps = random_matrix(batch * a, m, rng);
  const PooledAttributes p =
      localize_pool(Tensor::constant(maps), Tensor::constant(Matrix::Ones(batch * a, m)), static_cast<double>(m), batch);
  ASSERT_EQ(p.a_hat.rows(), batch);
  ASSERT_EQ(p.a_hat.cols(), a);
  for (Index b = 0; b < batch; ++b) {
    for (Index i = 0; i < a; ++i) EXPECT_NEAR(p.a_hat.value()(b, i), maps.row(b * a + i).mean(), 1e-14);
  }
  EXPECT_THROW(localize_pool(Tensor::constant(maps), Tensor::constant(maps), 0.0, batch), ArgumentError);
}

TEST(ClassScores, InnerProductTimesTemperature) {
  const Tensor a_hat = Tensor::constant((Matrix(1, 3) << 1, 0, 1).finished());
  const Matrix classes = (Matrix(2, 3) << 1, 0, 1, 0, 1, 0).finished();
  EXPECT_EQ(class_scores(a_hat, classes, 1.0).value(), (Matrix(1, 2) << 2, 0).finished());
  EXPECT_EQ(class_scores(a_hat, classes, 2.0).value(), (Matrix(1, 2) << 4, 0).finished());
  EXPECT_THROW(class_scores(a_hat, Matrix(0, 3), 1.0), ArgumentError);
  EXPECT_THROW(class_scores(a_hat, Matrix::Zero(2, 2), 1.0), ArgumentError);
}

TEST(MoaeHead, RoutersStartAtIdentity) {
  Rng rng(7);
  MoaeConfig mc;
  const MoaeHead head = MoaeHead::initialize(mc, 64, 16, rng);
  EXPECT_EQ(head.transform.rows(), 16);
  EXPECT_EQ(head.transform.cols(), 64);
  ASSERT_EQ(head.routers.size(), 1u);
  EXPECT_EQ(head.routers.front().value(), Matrix::Identity(16, 16));
  mc.per_attribute_router = true;
  EXPECT_EQ(MoaeHead::initialize(mc, 64, 16, rng).routers.size(), 16u);
  mc.top_j = 17;
  EXPECT_THROW(MoaeHead::initialize(mc, 64, 16, rng), ArgumentError);
}

TEST(ClassSemantics, PartitionAndNormalizedRows) {
  ClassSemantics s;
  s.attributes = (Matrix(3, 2) << 3, 4, 1, 0, 0, 2).finished();
  s.seen = {true, false, true};
  EXPECT_EQ(s.seen_classes(), (std::vector<Index>{0, 2}));
  EXPECT_EQ(s.unseen_classes(), (std::vector<Index>{1}));
  EXPECT_EQ(s.all_classes(), (std::vector<Index>{0, 1, 2}));
  const Matrix r = s.rows({0, 2}, true);
  EXPECT_NEAR(r(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(r(0, 1), 0.8, 1e-15);
  EXPECT_EQ(r(1, 1), 1.0);
  EXPECT_THROW(s.rows({3}), ArgumentError);
}

}  // namespace
}  // namespace acr
