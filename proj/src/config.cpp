#include "simba/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "simba/checkpoint.hpp"
#include "simba/errors.hpp"

namespace simba {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items())
    if (!keys.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <typename T>
void read(const json& j, const char* key, T& dst) {
  if (auto it = j.find(key); it != j.end()) dst = it->get<T>();
}

bool same_train(const TrainConfig& a, const TrainConfig& b) {
  return a.epochs == b.epochs && a.batch_size == b.batch_size && a.lr0 == b.lr0 && a.adam.beta1 == b.adam.beta1 &&
         a.adam.beta2 == b.adam.beta2 && a.adam.eps == b.adam.eps && a.plateau.patience == b.plateau.patience &&
         a.plateau.factor == b.plateau.factor && a.plateau.cooldown == b.plateau.cooldown &&
         a.plateau.threshold == b.plateau.threshold && a.seed == b.seed && a.deterministic == b.deterministic &&
         a.workers == b.workers;
}

bool same_oracle(const GrowthOracle& a, const GrowthOracle& b) {
  return a.maturity_age_female == b.maturity_age_female && a.maturity_age_male == b.maturity_age_male &&
         a.blob_base_radius == b.blob_base_radius && a.blob_gain == b.blob_gain && a.noise_std == b.noise_std &&
         a.relative_age_std == b.relative_age_std && a.background_level == b.background_level &&
         a.blob_level == b.blob_level && a.image_size == b.image_size && a.keypoint_count == b.keypoint_count;
}

}  // namespace

bool operator==(const RunConfig& a, const RunConfig& b) {
  return same_train(a.train, b.train) && a.model == b.model && same_oracle(a.oracle, b.oracle) &&
         a.paths == b.paths && a.ablation == b.ablation;
}

json run_config_to_json(const RunConfig& c) {
  const auto& t = c.train;
  const auto& o = c.oracle;
  return {
      {"train",
       {{"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"lr0", t.lr0},
        {"adam_beta1", t.adam.beta1},
        {"adam_beta2", t.adam.beta2},
        {"adam_eps", t.adam.eps},
        {"plateau_patience", t.plateau.patience},
        {"plateau_factor", t.plateau.factor},
        {"plateau_cooldown", t.plateau.cooldown},
        {"plateau_threshold", t.plateau.threshold},
        {"seed", t.seed},
        {"deterministic", t.deterministic},
        {"workers", t.workers}}},
      {"model", model_config_to_json(c.model)},
      {"oracle",
       {{"maturity_age_female", o.maturity_age_female},
        {"maturity_age_male", o.maturity_age_male},
        {"blob_base_radius", o.blob_base_radius},
        {"blob_gain", o.blob_gain},
        {"noise_std", o.noise_std},
        {"relative_age_std", o.relative_age_std},
        {"background_level", o.background_level},
        {"blob_level", o.blob_level},
        {"image_size", o.image_size},
        {"keypoint_count", o.keypoint_count}}},
      {"paths",
       {{"train_manifest", c.paths.train_manifest},
        {"val_manifest", c.paths.val_manifest},
        {"checkpoint", c.paths.checkpoint},
        {"out_dir", c.paths.out_dir}}},
      {"ablation", {{"seeds", c.ablation.seeds}, {"jobs", c.ablation.jobs}}},
  };
}

RunConfig run_config_from_json(const json& j, RunConfig c) {
  try {
    reject_unknown(j, {"train", "model", "oracle", "paths", "ablation"}, "config");
    if (auto it = j.find("train"); it != j.end()) {
      const auto& t = *it;
      reject_unknown(t,
                     {"epochs", "batch_size", "lr0", "adam_beta1", "adam_beta2", "adam_eps", "plateau_patience",
                      "plateau_factor", "plateau_cooldown", "plateau_threshold", "seed", "deterministic", "workers"},
                     "config.train");
      read(t, "epochs", c.train.epochs);
      read(t, "batch_size", c.train.batch_size);
      read(t, "lr0", c.train.lr0);
      read(t, "adam_beta1", c.train.adam.beta1);
      read(t, "adam_beta2", c.train.adam.beta2);
      read(t, "adam_eps", c.train.adam.eps);
      read(t, "plateau_patience", c.train.plateau.patience);
      read(t, "plateau_factor", c.train.plateau.factor);
      read(t, "plateau_cooldown", c.train.plateau.cooldown);
      read(t, "plateau_threshold", c.train.plateau.threshold);
      read(t, "seed", c.train.seed);
      read(t, "deterministic", c.train.deterministic);
      read(t, "workers", c.train.workers);
    }
    if (auto it = j.find("model"); it != j.end()) {
      // Merge over the current model settings so partial blocks work.
      json merged = model_config_to_json(c.model);
      reject_unknown(*it, {"backbone", "hidden", "flags", "image_size", "keypoint_count", "heatmap_sigma", "age_scale"},
                     "config.model");
      for (const auto& [key, value] : it->items()) {
        if (value.is_object()) {
          for (const auto& [k2, v2] : value.items()) {
            if (!merged[key].contains(k2)) throw ConfigError("config.model." + key + ": unknown key '" + k2 + "'");
            merged[key][k2] = v2;
          }
        } else {
          merged[key] = value;
        }
      }
      c.model = model_config_from_json(merged);
    }
    if (auto it = j.find("oracle"); it != j.end()) {
      const auto& o = *it;
      reject_unknown(o,
                     {"maturity_age_female", "maturity_age_male", "blob_base_radius", "blob_gain", "noise_std",
                      "relative_age_std", "background_level", "blob_level", "image_size", "keypoint_count"},
                     "config.oracle");
      read(o, "maturity_age_female", c.oracle.maturity_age_female);
      read(o, "maturity_age_male", c.oracle.maturity_age_male);
      read(o, "blob_base_radius", c.oracle.blob_base_radius);
      read(o, "blob_gain", c.oracle.blob_gain);
      read(o, "noise_std", c.oracle.noise_std);
      read(o, "relative_age_std", c.oracle.relative_age_std);
      read(o, "background_level", c.oracle.background_level);
      read(o, "blob_level", c.oracle.blob_level);
      read(o, "image_size", c.oracle.image_size);
      read(o, "keypoint_count", c.oracle.keypoint_count);
    }
    if (auto it = j.find("paths"); it != j.end()) {
      reject_unknown(*it, {"train_manifest", "val_manifest", "checkpoint", "out_dir"}, "config.paths");
      read(*it, "train_manifest", c.paths.train_manifest);
      read(*it, "val_manifest", c.paths.val_manifest);
      read(*it, "checkpoint", c.paths.checkpoint);
      read(*it, "out_dir", c.paths.out_dir);
    }
    if (auto it = j.find("ablation"); it != j.end()) {
      reject_unknown(*it, {"seeds", "jobs"}, "config.ablation");
      read(*it, "seeds", c.ablation.seeds);
      read(*it, "jobs", c.ablation.jobs);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  json j;
  try {
    j = json::parse(buffer.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j, std::move(base));
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write config " + path.string());
  out << run_config_to_json(config).dump(2) << '\n';
  if (!out) throw IoError("failed writing config " + path.string());
}

}  // namespace simba
