#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "acr/dataset.hpp"
#include "acr/model.hpp"

namespace acr {

struct EvalReport {
  double t1 = 0;  // ZSL, unseen candidates only
  double u = 0;   // GZSL accuracy on test-unseen
  double s = 0;   // GZSL accuracy on test-seen
  double h = 0;   // harmonic mean of s and u

  nlohmann::json to_json() const;
};

/// Class-averaged top-1 accuracy: argmax of tau * <a_hat, a_c> over
/// `candidates` (ties to the first candidate), averaged per true class.
double per_class_top1(const Matrix& a_hat, std::span<const Index> labels, const ClassSemantics& semantics,
                      const std::vector<Index>& candidates, double tau_cls = 1.0, bool normalize = false);

/// ZSL top-1 over unseen classes. Throws ArgumentError on an empty split.
double evaluate_zsl(const Matrix& a_hat_unseen, std::span<const Index> labels_unseen, const ClassSemantics& semantics,
                    double tau_cls = 1.0, bool normalize = false);

struct GzslResult {
  double u = 0;
  double s = 0;
  double h = 0;
};

/// GZSL over seen and unseen candidates together.
GzslResult evaluate_gzsl(const Matrix& a_hat_seen, std::span<const Index> labels_seen, const Matrix& a_hat_unseen,
                         std::span<const Index> labels_unseen, const ClassSemantics& semantics, double tau_cls = 1.0,
                         bool normalize = false);

/// Inference-mode attribute predictions for the given samples (rows in order).
Matrix predict_attributes(const AcrModel& model, const ZslDataset& dataset, std::span<const Index> samples,
                          Index batch_size = 64);

std::vector<Index> labels_of(const ZslDataset& dataset, std::span<const Index> samples);

EvalReport evaluate(const AcrModel& model, const ZslDataset& dataset);
/// Scores the ground-truth attribute vectors a_y as predictions.
EvalReport evaluate_oracle(const ZslDataset& dataset);

}  // namespace acr
