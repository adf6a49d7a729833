#include "acr/config.hpp"

#include <functional>
#include <map>

#include "acr/error.hpp"

namespace acr {

namespace {

using nlohmann::json;

struct Field {
  std::function<json(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const json&)> set;
};

template <typename T>
T checked(const json& v, const std::string& key) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError("config key '" + key + "' expects a boolean");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError("config key '" + key + "' expects an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
        throw ConfigError("config key '" + key + "' expects a nonnegative integer");
      }
    }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError("config key '" + key + "' expects a number");
  } else {
    if (!v.is_string()) throw ConfigError("config key '" + key + "' expects a string");
  }
  return v.get<T>();
}

template <typename T, typename Access>
Field field(const std::string& key, Access access) {
  return {[access](const ExperimentConfig& c) { return json(access(const_cast<ExperimentConfig&>(c))); },
          [access, key](ExperimentConfig& c, const json& v) { access(c) = checked<T>(v, key); }};
}

#define ACR_FIELD(key, type, expr) \
  { key, field<type>(key, [](ExperimentConfig & c) -> type& { return expr; }) }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t{
        // synthetic data
        ACR_FIELD("n_classes", Index, c.data.num_classes),
        ACR_FIELD("n_seen", Index, c.data.num_seen),
        ACR_FIELD("num_attributes", Index, c.data.num_attributes),
        ACR_FIELD("samples_per_class", Index, c.data.samples_per_class),
        ACR_FIELD("noise", double, c.data.noise),
        ACR_FIELD("data_seed", std::uint64_t, c.data.seed),
        ACR_FIELD("image_size", Index, c.data.image_size),
        ACR_FIELD("channels", Index, c.data.channels),
        ACR_FIELD("test_seen_fraction", double, c.data.test_seen_fraction),
        // backbone
        ACR_FIELD("patch_size", Index, c.train.model.backbone.patch_size),
        ACR_FIELD("d_model", Index, c.train.model.backbone.width),
        ACR_FIELD("layers", Index, c.train.model.backbone.layers),
        ACR_FIELD("heads", Index, c.train.model.backbone.heads),
        ACR_FIELD("mlp_ratio", Index, c.train.model.backbone.mlp_ratio),
        // mope
        ACR_FIELD("num_experts", Index, c.train.model.mope.num_experts),
        ACR_FIELD("top_k", Index, c.train.model.mope.top_k),
        ACR_FIELD("lora_rank", Index, c.train.model.mope.rank),
        ACR_FIELD("alpha", double, c.train.model.mope.alpha),
        ACR_FIELD("tau_route", double, c.train.model.mope.tau),
        ACR_FIELD("per_expert_down", bool, c.train.model.mope.per_expert_down),
        ACR_FIELD("mope_enabled", bool, c.train.model.mope.enabled),
        ACR_FIELD("router_skew_experts", Index, c.train.model.mope.skew_experts),
        // moae
        ACR_FIELD("top_j", Index, c.train.model.moae.top_j),
        ACR_FIELD("tau_attr", double, c.train.model.moae.tau_attr),
        ACR_FIELD("tau_attr_final", double, c.train.model.moae.tau_attr_final),
        ACR_FIELD("per_attribute_router", bool, c.train.model.moae.per_attribute_router),
        ACR_FIELD("tau_cls", double, c.train.model.moae.tau_cls),
        ACR_FIELD("normalize_semantics", bool, c.train.model.moae.normalize_semantics),
        // objective and optimizer
        ACR_FIELD("lambda1", double, c.train.weights.lambda1),
        ACR_FIELD("lambda2", double, c.train.weights.lambda2),
        ACR_FIELD("lambda3", double, c.train.weights.lambda3),
        ACR_FIELD("loss_eps", double, c.train.loss_eps),
        ACR_FIELD("lr", double, c.train.optimizer.learning_rate),
        ACR_FIELD("steps", Index, c.train.optimizer.steps),
        ACR_FIELD("batch_size", Index, c.train.optimizer.batch_size),
        ACR_FIELD("seed", std::uint64_t, c.train.seed),
        ACR_FIELD("log_every", Index, c.train.log_every),
        ACR_FIELD("ablate_load_balance", bool, c.train.ablations.no_load_balance),
        ACR_FIELD("ablate_consistency", bool, c.train.ablations.no_consistency),
        ACR_FIELD("ablate_diversity", bool, c.train.ablations.no_diversity),
        ACR_FIELD("ablate_patch_routing", bool, c.train.ablations.no_patch_routing),
    };
    t["router_init"] = {
        [](const ExperimentConfig& c) {
          return json(c.train.model.mope.router_init == RouterInit::Skewed ? "skewed" : "normal");
        },
        [](ExperimentConfig& c, const json& v) {
          const auto s = checked<std::string>(v, "router_init");
          if (s == "normal") {
            c.train.model.mope.router_init = RouterInit::Normal;
          } else if (s == "skewed") {
            c.train.model.mope.router_init = RouterInit::Skewed;
          } else {
            throw ConfigError("config key 'router_init' expects \"normal\" or \"skewed\"");
          }
        }};
    t["pool_divisor"] = {
        [](const ExperimentConfig& c) {
          return json(c.train.model.moae.pool_divisor == PoolDivisor::TopJ ? "j" : "M");
        },
        [](ExperimentConfig& c, const json& v) {
          const auto s = checked<std::string>(v, "pool_divisor");
          if (s == "j") {
            c.train.model.moae.pool_divisor = PoolDivisor::TopJ;
          } else if (s == "M") {
            c.train.model.moae.pool_divisor = PoolDivisor::AllPatches;
          } else {
            throw ConfigError("config key 'pool_divisor' expects \"j\" or \"M\"");
          }
        }};
    return t;
  }();
  return table;
}

#undef ACR_FIELD

}  // namespace

LossWeights TrainConfig::effective_weights() const {
  LossWeights w = weights;
  if (ablations.no_load_balance) w.lambda1 = 0;
  if (ablations.no_consistency) w.lambda2 = 0;
  if (ablations.no_diversity) w.lambda3 = 0;
  return w;
}

ModelConfig TrainConfig::effective_model() const {
  ModelConfig m = model;
  if (ablations.no_patch_routing) m.mope.alpha = 0;
  return m;
}

void TrainConfig::validate() const {
  try {
    effective_model().validate();
    weights.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  if (!(optimizer.learning_rate > 0)) throw ConfigError("lr must be positive");
  if (optimizer.steps < 0) throw ConfigError("steps must be nonnegative");
  if (optimizer.batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(loss_eps > 0)) throw ConfigError("loss_eps must be positive");
  if (log_every < 1) throw ConfigError("log_every must be positive");
}

void ExperimentConfig::sync_shared() {
  train.model.backbone.image_size = data.image_size;
  train.model.backbone.channels = data.channels;
  train.model.moae.num_attributes = data.num_attributes;
}

json to_json(const ExperimentConfig& config) {
  json out = json::object();
  for (const auto& [key, f] : fields()) out[key] = f.get(config);
  return out;
}

ExperimentConfig config_from_json(const json& flat) {
  if (!flat.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig config;
  for (const auto& [key, value] : flat.items()) {
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(config, value);
  }
  config.sync_shared();
  return config;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [key, f] : fields()) out.push_back(key);
  return out;
}

void apply_override(json& flat, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
  const json current = it->second.get(ExperimentConfig{});
  json value;
  if (current.is_string()) {
    value = text;
  } else {
    try {
      value = json::parse(text);
    } catch (const json::exception&) {
      throw ConfigError("cannot parse value '" + text + "' for key '" + key + "'");
    }
    if (current.is_number_float() && value.is_number()) value = value.get<double>();
  }
  ExperimentConfig probe;
  it->second.set(probe, value);  // type check
  flat[key] = value;
}

}  // namespace acr
