#include "acr/evaluate.hpp"

#include <algorithm>
#include <map>

#include "acr/error.hpp"
#include "acr/kernels.hpp"

namespace acr {

nlohmann::json EvalReport::to_json() const { return {{"T1", t1}, {"U", u}, {"S", s}, {"H", h}}; }

double per_class_top1(const Matrix& a_hat, std::span<const Index> labels, const ClassSemantics& semantics,
                      const std::vector<Index>& candidates, double tau_cls, bool normalize) {
  if (labels.empty()) throw ArgumentError("per_class_top1: empty split");
  if (candidates.empty()) throw ArgumentError("per_class_top1: empty candidate set");
  if (a_hat.rows() != static_cast<Index>(labels.size())) throw ArgumentError("per_class_top1: one label per prediction");
  const Matrix class_rows = semantics.rows(candidates, normalize);
  const Matrix scores = tau_cls * (a_hat * class_rows.transpose());
  std::map<Index, std::pair<Index, Index>> tally;  // class -> (correct, total)
  for (Index i = 0; i < scores.rows(); ++i) {
    const Index predicted = candidates[static_cast<std::size_t>(argmax(scores.row(i)))];
    auto& [correct, total] = tally[labels[static_cast<std::size_t>(i)]];
    correct += predicted == labels[static_cast<std::size_t>(i)] ? 1 : 0;
    ++total;
  }
  double acc = 0;
  for (const auto& [cls, counts] : tally) acc += static_cast<double>(counts.first) / static_cast<double>(counts.second);
  return acc / static_cast<double>(tally.size());
}

double evaluate_zsl(const Matrix& a_hat_unseen, std::span<const Index> labels_unseen, const ClassSemantics& semantics,
                    double tau_cls, bool normalize) {
  return per_class_top1(a_hat_unseen, labels_unseen, semantics, semantics.unseen_classes(), tau_cls, normalize);
}

GzslResult evaluate_gzsl(const Matrix& a_hat_seen, std::span<const Index> labels_seen, const Matrix& a_hat_unseen,
                         std::span<const Index> labels_unseen, const ClassSemantics& semantics, double tau_cls,
                         bool normalize) {
  const auto all = semantics.all_classes();
  GzslResult r;
  r.u = per_class_top1(a_hat_unseen, labels_unseen, semantics, all, tau_cls, normalize);
  r.s = per_class_top1(a_hat_seen, labels_seen, semantics, all, tau_cls, normalize);
  r.h = harmonic_mean(r.s, r.u);
  return r;
}

std::vector<Index> labels_of(const ZslDataset& dataset, std::span<const Index> samples) {
  std::vector<Index> out;
  out.reserve(samples.size());
  for (Index i : samples) out.push_back(dataset.samples[static_cast<std::size_t>(i)].label);
  return out;
}

Matrix predict_attributes(const AcrModel& model, const ZslDataset& dataset, std::span<const Index> samples,
                          Index batch_size) {
  const auto& bb = model.config().backbone;
  const Index m = bb.num_patches();
  Matrix out(static_cast<Index>(samples.size()), model.config().moae.num_attributes);
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    const auto batch = static_cast<Index>(end - start);
    Matrix patches(batch * m, bb.patch_dim());
    for (std::size_t i = start; i < end; ++i) {
      patches.middleRows(static_cast<Index>(i - start) * m, m) =
          patchify(dataset.samples[static_cast<std::size_t>(samples[i])].image, bb.patch_size);
    }
    const ForwardResult fwd = model.forward(patches, batch, ForwardMode::Inference);
    out.middleRows(static_cast<Index>(start), batch) = fwd.a_hat.value();
  }
  return out;
}

namespace {

EvalReport report_from(const Matrix& seen_pred, const std::vector<Index>& seen_labels, const Matrix& unseen_pred,
                       const std::vector<Index>& unseen_labels, const ClassSemantics& semantics, double tau,
                       bool normalize) {
  EvalReport r;
  r.t1 = evaluate_zsl(unseen_pred, unseen_labels, semantics, tau, normalize);
  const GzslResult g = evaluate_gzsl(seen_pred, seen_labels, unseen_pred, unseen_labels, semantics, tau, normalize);
  r.u = g.u;
  r.s = g.s;
  r.h = g.h;
  return r;
}

}  // namespace

EvalReport evaluate(const AcrModel& model, const ZslDataset& dataset) {
  const auto seen = dataset.indices(Split::TestSeen);
  const auto unseen = dataset.indices(Split::TestUnseen);
  if (seen.empty() || unseen.empty()) throw ArgumentError("evaluate: both test splits must be nonempty");
  const auto& moae = model.config().moae;
  return report_from(predict_attributes(model, dataset, seen), labels_of(dataset, seen),
                     predict_attributes(model, dataset, unseen), labels_of(dataset, unseen), dataset.semantics,
                     moae.tau_cls, moae.normalize_semantics);
}

EvalReport evaluate_oracle(const ZslDataset& dataset) {
  const auto seen = dataset.indices(Split::TestSeen);
  const auto unseen = dataset.indices(Split::TestUnseen);
  if (seen.empty() || unseen.empty()) throw ArgumentError("evaluate_oracle: both test splits must be nonempty");
  const auto seen_labels = labels_of(dataset, seen);
  const auto unseen_labels = labels_of(dataset, unseen);
  return report_from(dataset.semantics.rows(seen_labels), seen_labels, dataset.semantics.rows(unseen_labels),
                     unseen_labels, dataset.semantics, 1.0, false);
}

}  // namespace acr
