#include "acr/checkpoint.hpp"

#include <json.hpp>

#include "acr/array_io.hpp"
#include "acr/error.hpp"

namespace acr {

namespace {

constexpr const char* kFormat = "acr-checkpoint";
constexpr int kVersion = 1;

}  // namespace

void save_checkpoint(const AcrModel& model, const ExperimentConfig& config, const std::filesystem::path& dir) {
  const auto target = std::filesystem::absolute(dir);
  const auto tmp = target.parent_path() / (target.filename().string() + ".tmp");
  std::filesystem::remove_all(tmp);
  std::filesystem::create_directories(tmp);

  nlohmann::json params = nlohmann::json::array();
  for (const auto& [name, t] : model.named_parameters()) {
    write_array(tmp / (name + ".arr"), to_array(t.value()));
    params.push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}});
  }
  const nlohmann::json manifest = {
      {"format", kFormat}, {"version", kVersion}, {"config", to_json(config)}, {"parameters", params}};
  write_file_atomic(tmp / "manifest.json", manifest.dump(2) + "\n");

  std::filesystem::remove_all(target);
  std::filesystem::rename(tmp, target);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint manifest is not valid JSON: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != kFormat) throw FormatError("not an acr checkpoint: " + dir.string());
  if (manifest.value("version", 0) != kVersion) throw FormatError("unsupported checkpoint version");

  Checkpoint ck{AcrModel{}, config_from_json(manifest.at("config"))};
  ck.model = AcrModel::initialize(ck.config.train.effective_model(), ck.config.train.seed);
  auto params = ck.model.named_parameters();
  if (manifest.at("parameters").size() != params.size()) throw FormatError("checkpoint parameter count mismatch");
  for (auto& [name, t] : params) {
    const Matrix value = to_matrix(read_array(dir / (name + ".arr")));
    if (value.rows() != t.rows() || value.cols() != t.cols()) {
      throw FormatError("checkpoint parameter '" + name + "' has the wrong shape");
    }
    t.mutable_value() = value;
  }
  return ck;
}

}  // namespace acr
