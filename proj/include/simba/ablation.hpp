#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "simba/train.hpp"

namespace simba {

struct AblationConfig {
  std::string name;
  ModelFlags flags;
};

/// Baseline, (G, C), (G, rel), (C, rel), (G, C, rel).
std::vector<AblationConfig> ablation_configs();

struct AblationRun {
  AblationConfig config;
  std::uint64_t seed = 0;
  double val_mad = 0.0;
  EvalReport val_report;  // best checkpoint on the validation set
  std::vector<EpochRecord> history;
};

struct AblationMedian {
  AblationConfig config;
  double median_val_mad = 0.0;
};

struct AblationResult {
  std::vector<AblationRun> runs;  // config-major, seed-minor
  std::vector<AblationMedian> medians;

  const AblationMedian& median_for(const std::string& name) const;
  /// The run whose val MAD is the median for that config (lower middle for even counts).
  const AblationRun& median_run(const std::string& name) const;
};

using AblationProgress = std::function<void(const AblationRun&)>;

/// Trains every configuration for every seed. The seed drives both the
/// weight initialization and the epoch shuffles. Runs are independent, so
/// `jobs` > 1 trains several at once without changing any result.
AblationResult run_ablation_matrix(const PreparedSet& train_set, const PreparedSet& val_set,
                                   const ModelConfig& base, const TrainConfig& config,
                                   std::span<const std::uint64_t> seeds, int jobs = 1,
                                   const AblationProgress& progress = {});

double median(std::vector<double> values);

}  // namespace simba
