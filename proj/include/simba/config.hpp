#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "simba/model.hpp"
#include "simba/synthetic.hpp"
#include "simba/train.hpp"

namespace simba {

struct PathConfig {
  std::string train_manifest;
  std::string val_manifest;
  std::string checkpoint;  // empty: <out_dir>/best.smba
  std::string out_dir = "runs";
  friend bool operator==(const PathConfig&, const PathConfig&) = default;
};

struct AblationSettings {
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int jobs = 1;
  friend bool operator==(const AblationSettings&, const AblationSettings&) = default;
};

/// Everything needed to reproduce a run, as one document.
struct RunConfig {
  TrainConfig train;
  ModelConfig model;
  GrowthOracle oracle;
  PathConfig paths;
  AblationSettings ablation;
};

bool operator==(const RunConfig& a, const RunConfig& b);

nlohmann::json run_config_to_json(const RunConfig& config);
/// Missing keys keep their defaults; unknown keys throw ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
/// Throws IoError, ConfigError.
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

}  // namespace simba
