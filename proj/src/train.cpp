#include "acr/train.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "acr/array_io.hpp"
#include "acr/error.hpp"

namespace acr {

namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566;  // "shuf"
constexpr std::uint64_t kGumbelStream = 0x67756d62;   // "gumb"

void shuffle(std::vector<Index>& order, Rng rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
}

nlohmann::json row_json(const RowVector& r) { return std::vector<double>(r.data(), r.data() + r.size()); }

void write_dump(const std::filesystem::path& dir, const StepLog& log, const std::vector<Index>& batch,
                const AcrModel& model) {
  std::filesystem::create_directories(dir);
  nlohmann::json j = log.to_json();
  j["batch"] = batch;
  nlohmann::json norms = nlohmann::json::object();
  for (const auto& [name, t] : model.named_parameters()) {
    norms[name] = {{"value_norm", t.value().norm()}, {"grad_finite", t.has_grad() ? t.grad().allFinite() : true}};
  }
  j["parameters"] = norms;
  write_file_atomic(dir / "nan_dump.json", j.dump(2) + "\n");
}

}  // namespace

nlohmann::json StepLog::to_json() const {
  return {{"step", step}, {"L_cls", cls},     {"L_lb", lb},          {"L_cons", cons},
          {"L_div", div}, {"L_total", total}, {"tau_attr", tau_attr}};
}

nlohmann::json EpochRouting::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < mean_gate.size(); ++l) {
    layers.push_back({{"layer", l}, {"mean_gate", row_json(mean_gate[l])}, {"usage_cv", usage_cv[l]}});
  }
  return {{"epoch", epoch}, {"step", step}, {"layers", layers}};
}

double annealed_tau(double start, double end, Index step, Index steps) {
  if (steps <= 1) return start;
  const double t = static_cast<double>(step) / static_cast<double>(steps - 1);
  return start + (end - start) * t;
}

TrainResult train(const TrainConfig& config, const ZslDataset& dataset, const TrainSinks& sinks) {
  config.validate();
  dataset.validate();
  const ModelConfig model_config = config.effective_model();
  const LossWeights weights = config.effective_weights();
  if (dataset.semantics.num_attributes() != model_config.moae.num_attributes) {
    throw ConfigError("dataset has " + std::to_string(dataset.semantics.num_attributes()) +
                      " attributes but the model expects " + std::to_string(model_config.moae.num_attributes));
  }

  const auto& bb = model_config.backbone;
  const Index m = bb.num_patches();
  const Index a = model_config.moae.num_attributes;
  const Index batch = config.optimizer.batch_size;

  std::vector<Index> train_ids = dataset.indices(Split::Train);
  if (static_cast<Index>(train_ids.size()) < batch) {
    throw ConfigError("batch_size exceeds the number of training samples");
  }
  std::vector<Matrix> patches;
  patches.reserve(train_ids.size());
  for (Index i : train_ids) {
    const Image& img = dataset.samples[static_cast<std::size_t>(i)].image;
    if (img.height != bb.image_size || img.width != bb.image_size || img.channels != bb.channels) {
      throw ConfigError("dataset image geometry does not match the model");
    }
    patches.push_back(patchify(img, bb.patch_size));
  }

  // Labels become positions among seen classes.
  const std::vector<Index> seen = dataset.semantics.seen_classes();
  std::unordered_map<Index, Index> seen_position;
  for (std::size_t p = 0; p < seen.size(); ++p) seen_position[seen[p]] = static_cast<Index>(p);
  const Matrix seen_rows = dataset.semantics.rows(seen, model_config.moae.normalize_semantics);

  TrainResult result{AcrModel::initialize(model_config, config.seed), {}, {}};
  AcrModel& model = result.model;
  auto params = model.named_parameters();

  const Rng shuffle_root(config.seed, kShuffleStream);
  const Rng gumbel_root(config.seed, kGumbelStream);
  const Index per_epoch = static_cast<Index>(train_ids.size()) / batch;

  std::vector<Index> order(train_ids.size());
  Index epoch = -1;
  std::vector<RowVector> epoch_gate_sum;
  Index epoch_batches = 0;

  auto flush_epoch = [&](Index last_step) {
    if (epoch < 0 || epoch_batches == 0) return;
    EpochRouting er;
    er.epoch = epoch;
    er.step = last_step;
    for (const RowVector& s : epoch_gate_sum) {
      RowVector mean = s / static_cast<double>(epoch_batches);
      const double e = static_cast<double>(mean.size());
      const RowVector usage = e * mean;
      const double mu = usage.mean();
      const double sigma = std::sqrt((usage.array() - mu).square().mean());
      er.mean_gate.push_back(mean);
      er.usage_cv.push_back(sigma / (mu + config.loss_eps));
    }
    if (sinks.routing_log) *sinks.routing_log << er.to_json().dump() << "\n" << std::flush;
    result.routing.push_back(std::move(er));
  };

  for (Index step = 0; step < config.optimizer.steps; ++step) {
    const Index slot = step % per_epoch;
    if (slot == 0) {
      flush_epoch(step - 1);
      ++epoch;
      std::iota(order.begin(), order.end(), Index{0});
      shuffle(order, shuffle_root.substream(static_cast<std::uint64_t>(epoch)));
      epoch_gate_sum.clear();
      epoch_batches = 0;
    }

    std::vector<Index> batch_ids(static_cast<std::size_t>(batch));
    Matrix x(batch * m, bb.patch_dim());
    std::vector<Index> labels(static_cast<std::size_t>(batch));
    Matrix noise(batch * a, m);
    const Rng step_noise = gumbel_root.substream(static_cast<std::uint64_t>(step));
    for (Index b = 0; b < batch; ++b) {
      const Index local = order[static_cast<std::size_t>(slot * batch + b)];
      const Index sample = train_ids[static_cast<std::size_t>(local)];
      batch_ids[static_cast<std::size_t>(b)] = sample;
      x.middleRows(b * m, m) = patches[static_cast<std::size_t>(local)];
      labels[static_cast<std::size_t>(b)] = seen_position.at(dataset.samples[static_cast<std::size_t>(sample)].label);
      Rng r = step_noise.substream(static_cast<std::uint64_t>(sample));
      for (Index i = 0; i < a; ++i) {
        for (Index c = 0; c < m; ++c) noise(b * a + i, c) = r.gumbel();
      }
    }

    StepLog log;
    log.step = step;
    log.tau_attr = annealed_tau(model_config.moae.tau_attr, model_config.moae.tau_attr_final, step,
                                config.optimizer.steps);
    ForwardResult fwd;
    try {
      fwd = model.forward(x, batch, ForwardMode::Train, noise, log.tau_attr);
    } catch (const ArgumentError& e) {
      // Updated weights can overflow the activations; the first step runs on the initial model.
      if (step == 0) throw;
      log.cls = log.total = std::numeric_limits<double>::quiet_NaN();
      if (sinks.dump_dir) write_dump(*sinks.dump_dir, log, batch_ids, model);
      throw TrainingDiverged("non-finite activations at step " + std::to_string(step) + ": " + e.what());
    }
    const Tensor scores = class_scores(fwd.a_hat, seen_rows, model_config.moae.tau_cls);
    const Tensor l_cls = classification_loss(scores, labels);

    Tensor l_lb = Tensor::scalar(0.0), l_cons = Tensor::scalar(0.0), l_div = Tensor::scalar(0.0);
    if (!fwd.records.empty()) {
      l_lb = load_balance_loss(fwd.records, config.loss_eps);
      l_cons = consistency_loss(fwd.records, config.loss_eps);
      l_div = diversity_loss(fwd.records, config.loss_eps);
      if (epoch_gate_sum.empty()) {
        for (const auto& rec : fwd.records) epoch_gate_sum.push_back(RowVector::Zero(rec.num_experts()));
      }
      for (std::size_t l = 0; l < fwd.records.size(); ++l) {
        epoch_gate_sum[l] += fwd.records[l].gates.value().colwise().mean();
      }
      ++epoch_batches;
    }
    const Tensor total = total_loss(l_cls, l_lb, l_cons, l_div, weights);

    log.cls = l_cls.item();
    log.lb = l_lb.item();
    log.cons = l_cons.item();
    log.div = l_div.item();
    log.total = total.item();
    if (!std::isfinite(log.total)) {
      if (sinks.dump_dir) write_dump(*sinks.dump_dir, log, batch_ids, model);
      throw TrainingDiverged("non-finite loss at step " + std::to_string(step));
    }

    total.backward();
    bool finite = true;
    for (auto& [name, p] : params) {
      if (p.has_grad()) p.mutable_value() -= config.optimizer.learning_rate * p.grad();
      finite = finite && p.value().allFinite();
    }
    if (!finite) {
      if (sinks.dump_dir) write_dump(*sinks.dump_dir, log, batch_ids, model);
      throw TrainingDiverged("non-finite parameters after step " + std::to_string(step));
    }
    for (auto& [name, p] : params) p.zero_grad();

    if (sinks.step_log && step % config.log_every == 0) *sinks.step_log << log.to_json().dump() << "\n";
    result.history.push_back(log);
  }
  flush_epoch(config.optimizer.steps - 1);
  if (sinks.step_log) sinks.step_log->flush();
  return result;
}

}  // namespace acr
