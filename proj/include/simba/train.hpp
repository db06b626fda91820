#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simba/checkpoint.hpp"
#include "simba/dataset.hpp"
#include "simba/model.hpp"
#include "simba/optim.hpp"

namespace simba {

struct TrainConfig {
  int epochs = 150;
  int batch_size = 17;
  double lr0 = 0.001;
  AdamConfig adam;
  PlateauConfig plateau;
  std::uint64_t seed = 0;
  /// Single-threaded evaluation with a fixed reduction order.
  bool deterministic = false;
  /// Evaluation worker threads when not deterministic; 0 picks hardware concurrency.
  int workers = 0;

  /// Throws std::invalid_argument.
  void validate() const;
};

/// A manifest decoded into model inputs, sorted by record id.
struct PreparedSet {
  std::vector<std::string> ids;
  std::vector<ModelSample> samples;
  std::vector<std::optional<double>> bone_age_months;

  std::size_t size() const { return samples.size(); }
};

/// Reads every image and renders its heatmap. Throws IoError, DimensionMismatch.
PreparedSet prepare_set(const Manifest& manifest, const ModelConfig& config);

struct EvalRow {
  std::string id;
  double bone_age = 0.0;
  double predicted = 0.0;
  double chronological_age = 0.0;
  double relative_age = 0.0;  // c - b
  double abs_error = 0.0;     // |predicted - b|
};

struct EvalReport {
  std::vector<EvalRow> rows;  // ordered by id
  double mad = 0.0;
  std::optional<double> pearson_r;
  double ols_slope = 0.0;
  double ols_intercept = 0.0;
};

/// Raw head outputs in months (residual or bone age, depending on the flags), in set order.
std::vector<double> predict_outputs(const SimbaModel& model, const PreparedSet& set, bool deterministic = true,
                                    int workers = 0);

/// Throws MissingGroundTruth if any record lacks a bone age.
EvalReport evaluate(const SimbaModel& model, const PreparedSet& set, bool deterministic = true, int workers = 0);
EvalReport evaluate(const SimbaModel& model, const Manifest& manifest, bool deterministic = true, int workers = 0);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_mad = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Adam + plateau schedule with best-on-validation selection. Epoch 0 (the
/// initialization) is a candidate, so epochs == 0 returns the input model.
/// Throws NonFiniteGradient with epoch/step context.
TrainResult train(const SimbaModel& model, const PreparedSet& train_set, const PreparedSet& val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});
TrainResult train(const SimbaModel& model, const Manifest& train_set, const Manifest& val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace simba
