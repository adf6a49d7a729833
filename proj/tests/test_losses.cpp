#include "acr/losses.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "acr/error.hpp"

namespace acr {
namespace {

Tensor rows_of(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index r = 0;
  for (const auto& row : rows) {
    Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return Tensor::constant(m);
}

TEST(LoadBalance, UniformUsageIsZero) {
  const std::vector<Tensor> gates{rows_of({{0.5, 0.5, 0, 0}, {0, 0, 0.5, 0.5}})};
  EXPECT_NEAR(load_balance_loss(gates).item(), 0.0, 1e-12);
}

TEST(LoadBalance, CollapsedFourExpertsIsSqrtThree) {
  const std::vector<Tensor> gates{rows_of({{1, 0, 0, 0}, {1, 0, 0, 0}, {1, 0, 0, 0}})};
  EXPECT_NEAR(load_balance_loss(gates).item(), std::sqrt(3.0), 2e-8);
  EXPECT_NEAR(load_balance_loss(gates).item(), 1.7321, 1e-4);
}

TEST(LoadBalance, AveragesOverLayers) {
  const std::vector<Tensor> gates{rows_of({{1, 0, 0, 0}}), rows_of({{0.25, 0.25, 0.25, 0.25}})};
  EXPECT_NEAR(load_balance_loss(gates).item(), std::sqrt(3.0) / 2.0, 1e-7);
}

TEST(UsageStats, MatchesHandComputation) {
  const UsageStats s = usage_stats((Matrix(2, 2) << 1, 0, 0.5, 0.5).finished());
  EXPECT_NEAR(s.mean_gate(0), 0.75, 1e-15);
  EXPECT_NEAR(s.usage(0), 1.5, 1e-15);
  EXPECT_NEAR(s.mu, 1.0, 1e-15);
  EXPECT_NEAR(s.sigma, 0.5, 1e-15);
  EXPECT_NEAR(s.coefficient_of_variation(), 0.5, 1e-8);
}

TEST(Consistency, TwoLayerOneHotDisagreementIsLn2) {
  const std::vector<Tensor> gates{rows_of({{1, 0}}), rows_of({{0, 1}})};
  EXPECT_NEAR(consistency_loss(gates).item(), std::log(2.0), 1e-6);
}

TEST(Consistency, IdenticalLayersAreZero) {
  const Tensor g = rows_of({{0.7, 0.3, 0}, {0, 0.1, 0.9}});
  const std::vector<Tensor> gates{g, g, g};
  EXPECT_NEAR(consistency_loss(gates).item(), 0.0, 1e-7);
}

TEST(Consistency, MatchesKlOracle) {
  const Tensor a = rows_of({{0.6, 0.4, 0}});
  const Tensor b = rows_of({{0.2, 0, 0.8}});
  const std::vector<Tensor> gates{a, b};
  // mean = (0.4, 0.2, 0.4); KL summed over layers, divided by M L = 2.
  const double kl_a = 0.6 * std::log(0.6 / 0.4) + 0.4 * std::log(0.4 / 0.2);
  const double kl_b = 0.2 * std::log(0.2 / 0.4) + 0.8 * std::log(0.8 / 0.4);
  EXPECT_NEAR(consistency_loss(gates).item(), (kl_a + kl_b) / 2.0, 1e-6);
}

TEST(Diversity, UniformIsMinusLogE) {
  for (Index e : {2, 4, 20}) {
    const Tensor g = Tensor::constant(Matrix::Constant(3, e, 1.0 / static_cast<double>(e)));
    const std::vector<Tensor> gates{g, g};
    EXPECT_NEAR(diversity_loss(gates).item(), -std::log(static_cast<double>(e)), 1e-4);
  }
}

TEST(Diversity, TwoPointDistribution) {
  const std::vector<Tensor> gates{rows_of({{0.75, 0.25}})};
  EXPECT_NEAR(diversity_loss(gates).item(), -0.5623, 1e-4);
}

TEST(Diversity, OneHotIsZero) {
  const std::vector<Tensor> gates{rows_of({{0, 1, 0}, {1, 0, 0}})};
  EXPECT_NEAR(diversity_loss(gates).item(), 0.0, 1e-7);
}

TEST(Classification, TwoClassExample) {
  EXPECT_NEAR(classification_loss(rows_of({{1, 0}}), std::vector<Index>{0}).item(), 0.3133, 1e-4);
}

TEST(Classification, UniformScoresAreLogN) {
  const Tensor s = Tensor::constant(Matrix::Zero(4, 7));
  EXPECT_NEAR(classification_loss(s, std::vector<Index>{0, 3, 6, 2}).item(), std::log(7.0), 1e-12);
}

TEST(Classification, RejectsBadLabels) {
  EXPECT_THROW(classification_loss(rows_of({{1, 0}}), std::vector<Index>{2}), ArgumentError);
}

TEST(TotalLoss, WeightedSum) {
  const Tensor cls = Tensor::scalar(1), lb = Tensor::scalar(2), cons = Tensor::scalar(3), div = Tensor::scalar(4);
  EXPECT_EQ(total_loss(cls, lb, cons, div, LossWeights{1, 1, 1}).item(), 10.0);
  EXPECT_EQ(total_loss(cls, lb, cons, div, LossWeights{0, 0, 0}).item(), 1.0);
  EXPECT_NEAR(total_loss(cls, lb, cons, div, LossWeights{}).item(), 1 + 2 + 0.03 + 0.0004, 1e-15);
}

TEST(TotalLoss, ZeroWeightDropsNonFiniteTerm) {
  const Tensor bad = Tensor::scalar(std::nan(""));
  EXPECT_EQ(total_loss(Tensor::scalar(1), bad, bad, bad, LossWeights{0, 0, 0}).item(), 1.0);
}

TEST(LossWeights, RejectNegative) {
  EXPECT_THROW((LossWeights{-1, 0, 0}.validate()), ArgumentError);
}

TEST(RecordOverloads, AgreeWithTensorOverloads) {
  RoutingRecord r0, r1;
  r0.tokens_per_image = r1.tokens_per_image = 2;
  r0.gates = rows_of({{1, 0}, {0.5, 0.5}});
  r1.gates = rows_of({{0, 1}, {0.5, 0.5}});
  const std::vector<RoutingRecord> records{r0, r1};
  const std::vector<Tensor> gates{r0.gates, r1.gates};
  EXPECT_EQ(load_balance_loss(records).item(), load_balance_loss(gates).item());
  EXPECT_EQ(consistency_loss(records).item(), consistency_loss(gates).item());
  EXPECT_EQ(diversity_loss(records).item(), diversity_loss(gates).item());
}

}  // namespace
}  // namespace acr
