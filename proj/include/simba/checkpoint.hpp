#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "simba/model.hpp"

namespace simba {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainMeta {
  int epoch = 0;
  double best_val_mad = 0.0;
  std::uint64_t seed = 0;
  friend bool operator==(const TrainMeta&, const TrainMeta&) = default;
};

struct Checkpoint {
  SimbaModel model;
  TrainMeta meta;
};

nlohmann::json model_config_to_json(const ModelConfig& config);
/// Strict: unknown keys raise ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Layout: "SMBA", u32 version, u32 length + UTF-8 JSON (model config and
/// training metadata), then per tensor: u32 name length, name, u32 rank,
/// rank x u32 dims, little-endian float32 payload in row-major order; trailing
/// CRC-32 of every preceding byte. All integers little-endian.
std::vector<std::uint8_t> encode_checkpoint(const SimbaModel& model, const TrainMeta& meta);
/// Throws CorruptChecksum, VersionMismatch, ParseError.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const SimbaModel& model, const TrainMeta& meta, const std::filesystem::path& path);
/// Throws IoError plus everything decode_checkpoint throws.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace simba
