#include "acr/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "acr/array_io.hpp"
#include "acr/checkpoint.hpp"
#include "acr/config.hpp"
#include "acr/dataset.hpp"
#include "acr/error.hpp"
#include "acr/evaluate.hpp"
#include "acr/gradcheck_suite.hpp"
#include "acr/routing_report.hpp"
#include "acr/train.hpp"

namespace acr::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct ConfigOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

void add_config_options(CLI::App& app, ConfigOptions& o) {
  app.add_option("--config", o.config_path, "JSON config file of flat key/value pairs");
  app.add_option("--set", o.sets, "Override one config key (key=value); repeatable");
  app.add_option("--seed", o.seed, "Seed override (highest priority; ACR_SEED is the lowest)");
}

std::uint64_t parse_seed(const std::string& text, const std::string& origin) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(text, &used);
    if (used != text.size() || text.front() == '-') throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(origin + " is not an unsigned integer: '" + text + "'");
  }
}

/// Priority, lowest first: defaults, ACR_SEED, config file, --set, --seed.
ExperimentConfig resolve_config(const ConfigOptions& o, const std::string& seed_key) {
  json flat = json::object();
  if (const char* env = std::getenv("ACR_SEED"); env != nullptr && *env != '\0') {
    flat[seed_key] = parse_seed(env, "ACR_SEED");
  }
  if (!o.config_path.empty()) {
    json file;
    try {
      file = json::parse(read_file(o.config_path));
    } catch (const json::exception& e) {
      throw ConfigError("config file " + o.config_path + " is not valid JSON: " + e.what());
    } catch (const FormatError& e) {
      throw ConfigError(e.what());
    }
    if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
    for (const auto& [key, value] : file.items()) flat[key] = value;
  }
  for (const auto& s : o.sets) apply_override(flat, s);
  if (o.seed) flat[seed_key] = *o.seed;
  ExperimentConfig config = config_from_json(flat);
  try {
    config.data.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  config.train.validate();
  return config;
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

ZslDataset dataset_for(const std::string& data_dir, const ExperimentConfig& config) {
  return data_dir.empty() ? make_synthetic_zsl(config.data) : load_dataset(data_dir);
}

std::vector<Index> select_samples(const ZslDataset& ds, const std::string& split, Index limit) {
  std::vector<Index> ids;
  if (split == "all") {
    ids.resize(ds.samples.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<Index>(i);
  } else if (split == "test") {
    ids = ds.indices(Split::TestSeen);
    const auto unseen = ds.indices(Split::TestUnseen);
    ids.insert(ids.end(), unseen.begin(), unseen.end());
    std::sort(ids.begin(), ids.end());
  } else {
    try {
      ids = ds.indices(split_from_string(split));
    } catch (const std::exception&) {
      throw ConfigError("unknown split '" + split + "'");
    }
  }
  if (limit > 0 && static_cast<Index>(ids.size()) > limit) ids.resize(static_cast<std::size_t>(limit));
  if (ids.empty()) throw ArgumentError("split '" + split + "' is empty");
  return ids;
}

/// Streams into `<path>.tmp` and renames on close, also after a failure.
class AtomicStream {
 public:
  explicit AtomicStream(fs::path path) : path_(std::move(path)), tmp_(path_.string() + ".tmp"), out_(tmp_) {
    if (!out_) throw std::runtime_error("cannot open " + tmp_.string());
  }
  ~AtomicStream() { close(); }
  std::ostream& stream() { return out_; }
  void close() {
    if (!out_.is_open()) return;
    out_.close();
    std::error_code ec;
    fs::rename(tmp_, path_, ec);
  }

 private:
  fs::path path_;
  fs::path tmp_;
  std::ofstream out_;
};

int gen_data(const ConfigOptions& o, const std::string& out_dir, std::ostream& out) {
  const ExperimentConfig config = resolve_config(o, "data_seed");
  const ZslDataset ds = make_synthetic_zsl(config.data);
  save_dataset(ds, out_dir);
  write_json(fs::path(out_dir) / "config.json", to_json(config));
  out << json{{"dataset", out_dir},
              {"samples", ds.samples.size()},
              {"classes", ds.semantics.num_classes()},
              {"seen", ds.semantics.seen_classes().size()}}
             .dump()
      << "\n";
  return kExitOk;
}

int train_cmd(const ConfigOptions& o, const std::string& data_dir, const std::string& out_dir, std::ostream& out) {
  const ExperimentConfig config = resolve_config(o, "seed");
  const ZslDataset ds = dataset_for(data_dir, config);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  write_json(dir / "config.json", to_json(config));

  AtomicStream steps(dir / "steps.ndjson");
  AtomicStream routing(dir / "routing.ndjson");
  TrainSinks sinks{&steps.stream(), &routing.stream(), dir};
  TrainResult result = train(config.train, ds, sinks);
  steps.close();
  routing.close();
  save_checkpoint(result.model, config, dir / "checkpoint");
  const StepLog& last = result.history.empty() ? StepLog{} : result.history.back();
  out << json{{"checkpoint", (dir / "checkpoint").string()}, {"steps", result.history.size()}, {"final", last.to_json()}}
             .dump()
      << "\n";
  return kExitOk;
}

int eval_cmd(const ConfigOptions& o, const std::string& checkpoint, const std::string& data_dir, bool oracle,
             const std::string& out_dir, std::ostream& out) {
  EvalReport report;
  if (oracle) {
    const ExperimentConfig config = checkpoint.empty() ? resolve_config(o, "seed") : load_checkpoint(checkpoint).config;
    report = evaluate_oracle(dataset_for(data_dir, config));
  } else {
    if (checkpoint.empty()) throw ConfigError("eval needs --checkpoint (or --oracle)");
    const Checkpoint ck = load_checkpoint(checkpoint);
    report = evaluate(ck.model, dataset_for(data_dir, ck.config));
  }
  const json j = report.to_json();
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_json(fs::path(out_dir) / "eval_report.json", j);
  }
  out << j.dump() << "\n";
  return kExitOk;
}

int analyze_cmd(const std::string& checkpoint, const std::string& data_dir, const std::string& split,
                const std::string& out_dir, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  if (!ck.model.config().mope.enabled) throw std::runtime_error("the checkpoint has no MoPE layers to analyze");
  const ZslDataset ds = dataset_for(data_dir, ck.config);
  const auto ids = select_samples(ds, split, 0);
  const auto gates = collect_routing(ck.model, ds, ids);
  const UtilizationReport report = expert_utilization_report(gates);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  write_json(dir / "routing_report.json", report.to_json());
  export_routing(gates, ck.model.config().backbone.num_patches(), dir / "routing");
  json summary = {{"mean_usage_cv", report.mean_usage_cv()}, {"mean_active_experts", report.mean_active_experts()}};
  json active = json::array();
  for (const auto& l : report.layers) active.push_back(l.active_experts);
  summary["active_experts"] = active;
  out << summary.dump() << "\n";
  return kExitOk;
}

int export_cmd(const std::string& checkpoint, const std::string& data_dir, const std::string& split, Index limit,
               const std::string& out_dir, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const ZslDataset ds = dataset_for(data_dir, ck.config);
  const auto ids = select_samples(ds, split, limit);
  const AttributeMapExport maps = collect_attribute_maps(ck.model, ds, ids);
  export_attribute_maps(maps, ids, ck.model.config().moae.num_attributes, out_dir);
  out << json{{"images", ids.size()}, {"out", out_dir}}.dump() << "\n";
  return kExitOk;
}

int gradcheck_cmd(Index instances, std::uint64_t seed, std::ostream& out) {
  bool ok = true;
  for (const auto& r : run_gradcheck_suite(instances, seed)) {
    const bool pass = r.max_error < kGradcheckTolerance;
    ok = ok && pass;
    out << json{{"composition", r.name}, {"instances", r.instances}, {"max_error", r.max_error}, {"pass", pass}}.dump()
        << "\n";
  }
  return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attribute-centric routing for zero-shot learning", "acr"};
  app.require_subcommand(1);

  ConfigOptions opts;
  std::string out_dir, data_dir, checkpoint, routing_split, export_split;
  bool oracle = false;
  Index limit = 0, instances = 20;
  std::uint64_t grad_seed = 0;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic benchmark");
  add_config_options(*gen, opts);
  gen->add_option("--out", out_dir, "Dataset directory")->required();

  auto* tr = app.add_subcommand("train", "Train a model; writes a checkpoint and logs");
  add_config_options(*tr, opts);
  tr->add_option("--data", data_dir, "Dataset directory (generated from the config when omitted)");
  tr->add_option("--out", out_dir, "Run directory")->required();

  auto* ev = app.add_subcommand("eval", "ZSL and GZSL report as JSON");
  add_config_options(*ev, opts);
  ev->add_option("--checkpoint", checkpoint, "Checkpoint directory");
  ev->add_option("--data", data_dir, "Dataset directory");
  ev->add_flag("--oracle", oracle, "Score the true class attributes instead of a model");
  ev->add_option("--out", out_dir, "Also write eval_report.json here");

  auto* an = app.add_subcommand("analyze-routing", "Expert utilization report");
  an->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  an->add_option("--data", data_dir, "Dataset directory");
  an->add_option("--split", routing_split, "train, test_seen, test_unseen, test or all")->default_val("test");
  an->add_option("--out", out_dir, "Report directory")->required();

  auto* ex = app.add_subcommand("export-attr-maps", "Per-image masked attribute maps");
  ex->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  ex->add_option("--data", data_dir, "Dataset directory");
  ex->add_option("--split", export_split, "train, test_seen, test_unseen, test or all")->default_val("test_unseen");
  ex->add_option("--limit", limit, "Export at most this many images (0 = all)")->default_val(0);
  ex->add_option("--out", out_dir, "Export directory")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gc->add_option("--instances", instances, "Random instantiations per composition")->default_val(20);
  gc->add_option("--seed", grad_seed, "Suite seed")->default_val(0);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "acr: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (gen->parsed()) return gen_data(opts, out_dir, out);
    if (tr->parsed()) return train_cmd(opts, data_dir, out_dir, out);
    if (ev->parsed()) return eval_cmd(opts, checkpoint, data_dir, oracle, out_dir, out);
    if (an->parsed()) return analyze_cmd(checkpoint, data_dir, routing_split, out_dir, out);
    if (ex->parsed()) return export_cmd(checkpoint, data_dir, export_split, limit, out_dir, out);
    if (gc->parsed()) return gradcheck_cmd(instances, grad_seed, out);
  } catch (const ConfigError& e) {
    err << "acr: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ArgumentError& e) {
    err << "acr: invalid argument: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TrainingDiverged& e) {
    err << "acr: training diverged: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "acr: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace acr::cli
