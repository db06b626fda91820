#include "simba/train.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "simba/errors.hpp"
#include "simba/random.hpp"
#include "simba/stats.hpp"

namespace simba {

namespace {

constexpr int kEvalChunk = 32;

int resolve_workers(bool deterministic, int workers) {
  if (deterministic) return 1;
  if (workers > 0) return workers;
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (!(lr0 > 0.0)) throw std::invalid_argument("lr0 must be positive");
  if (!(adam.beta1 > 0.0 && adam.beta1 < 1.0 && adam.beta2 > 0.0 && adam.beta2 < 1.0 && adam.eps > 0.0))
    throw std::invalid_argument("Adam betas must be in (0, 1) and eps positive");
  if (!(plateau.factor > 0.0 && plateau.factor < 1.0)) throw std::invalid_argument("plateau factor must be in (0, 1)");
  if (plateau.patience < 1 || plateau.cooldown < 0 || plateau.threshold < 0.0)
    throw std::invalid_argument("plateau patience must be positive, cooldown and threshold non-negative");
}

PreparedSet prepare_set(const Manifest& manifest, const ModelConfig& config) {
  if (manifest.image_size != config.image_size)
    throw DimensionMismatch("manifest image_size " + std::to_string(manifest.image_size) + " != model image_size " +
                            std::to_string(config.image_size));
  std::vector<const PatientRecord*> order;
  for (const auto& r : manifest.records) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->id < b->id; });

  PreparedSet set;
  for (const auto* r : order) {
    set.ids.push_back(r->id);
    set.samples.push_back(make_model_sample(config, *r, read_png(manifest.resolve(*r))));
    set.bone_age_months.push_back(r->bone_age_months);
  }
  return set;
}

std::vector<double> predict_outputs(const SimbaModel& model, const PreparedSet& set, bool deterministic,
                                    int workers) {
  const std::size_t n = set.size();
  const std::size_t chunks = (n + kEvalChunk - 1) / kEvalChunk;
  std::vector<double> out(n);
  auto run_chunk = [&](std::size_t c) {
    const std::size_t begin = c * kEvalChunk;
    const std::size_t end = std::min(n, begin + kEvalChunk);
    const auto batch = make_batch<float>(model.config(), std::span(set.samples).subspan(begin, end - begin));
    const Matrix<float> y = model.forward(batch);
    for (std::size_t i = begin; i < end; ++i)
      out[i] = static_cast<double>(y(0, static_cast<Eigen::Index>(i - begin))) * model.config().age_scale;
  };

  // Chunk boundaries do not depend on the worker count, so results match across modes.
  const int threads = std::min<int>(resolve_workers(deterministic, workers), static_cast<int>(chunks));
  if (threads <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
    return out;
  }
  std::vector<std::jthread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t c = t; c < chunks; c += threads) run_chunk(c);
    });
  pool.clear();
  return out;
}

EvalReport evaluate(const SimbaModel& model, const PreparedSet& set, bool deterministic, int workers) {
  for (std::size_t i = 0; i < set.size(); ++i)
    if (!set.bone_age_months[i]) throw MissingGroundTruth("record '" + set.ids[i] + "' has no bone age");

  const auto outputs = predict_outputs(model, set, deterministic, workers);
  EvalReport report;
  report.rows.reserve(set.size());
  CompensatedSum total;
  std::vector<double> rel, err;
  for (std::size_t i = 0; i < set.size(); ++i) {
    EvalRow row;
    row.id = set.ids[i];
    row.bone_age = *set.bone_age_months[i];
    row.chronological_age = set.samples[i].chronological_age_months.value_or(0.0);
    row.predicted = bone_age_from_output(outputs[i], set.samples[i].chronological_age_months, model.config().flags);
    row.relative_age = row.chronological_age - row.bone_age;
    row.abs_error = std::abs(row.predicted - row.bone_age);
    total.add(row.abs_error);
    rel.push_back(row.relative_age);
    err.push_back(row.abs_error);
    report.rows.push_back(std::move(row));
  }
  report.mad = set.size() == 0 ? 0.0 : total.value() / static_cast<double>(set.size());
  if (set.size() >= 2) {
    const BiasFit fit = fit_bias(rel, err);
    report.pearson_r = fit.pearson_r;
    report.ols_slope = fit.slope;
    report.ols_intercept = fit.intercept;
  }
  return report;
}

EvalReport evaluate(const SimbaModel& model, const Manifest& manifest, bool deterministic, int workers) {
  for (const auto& r : manifest.records)
    if (!r.bone_age_months) throw MissingGroundTruth("record '" + r.id + "' has no bone age");
  return evaluate(model, prepare_set(manifest, model.config()), deterministic, workers);
}

TrainResult train(const SimbaModel& initial, const PreparedSet& train_set, const PreparedSet& val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.size() == 0 || val_set.size() == 0) throw std::invalid_argument("train and val sets must be non-empty");
  for (std::size_t i = 0; i < train_set.size(); ++i)
    if (!train_set.bone_age_months[i]) throw MissingGroundTruth("record '" + train_set.ids[i] + "' has no bone age");

  const ModelConfig& mc = initial.config();
  std::vector<float> targets(train_set.size());
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    const auto& s = train_set.samples[i];
    if (mc.flags.use_relative && !s.chronological_age_months)
      throw MissingChronologicalAge("record '" + train_set.ids[i] + "' lacks a chronological age");
    targets[i] = static_cast<float>(
        training_target(mc, s.chronological_age_months.value_or(0.0), *train_set.bone_age_months[i]));
  }

  SimbaModel model = initial;
  Adam<float> adam(model.parameters(), config.adam);
  PlateauScheduler scheduler(config.lr0, config.plateau);

  TrainResult result{Checkpoint{initial, TrainMeta{0, 0.0, config.seed}}, {}};
  result.best.meta.best_val_mad = evaluate(model, val_set, config.deterministic, config.workers).mad;

  std::vector<std::size_t> order(train_set.size());
  std::vector<ModelSample> batch_samples;
  std::vector<float> batch_targets;
  long step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());

    const double lr = scheduler.lr();
    CompensatedSum loss_sum;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      batch_samples.clear();
      batch_targets.clear();
      for (std::size_t i = begin; i < end; ++i) {
        batch_samples.push_back(train_set.samples[order[i]]);
        batch_targets.push_back(targets[order[i]]);
      }
      const auto batch = make_batch<float>(mc, batch_samples);
      ForwardCache<float> cache;
      const Matrix<float> y = model.forward(batch, &cache);
      const auto loss = l1_loss<float>(y, batch_targets);
      ++step;
      const auto grads = model.backward(cache, loss.d_output, batch, StepContext{epoch, step});
      adam.step(model.parameters(), grads, lr);
      loss_sum.add(static_cast<double>(loss.value) * static_cast<double>(end - begin));
    }

    const double val_mad = evaluate(model, val_set, config.deterministic, config.workers).mad;
    const EpochRecord record{epoch, loss_sum.value() / static_cast<double>(order.size()), val_mad, lr};
    result.history.push_back(record);
    if (val_mad < result.best.meta.best_val_mad) {
      result.best.model = model;
      result.best.meta.epoch = epoch;
      result.best.meta.best_val_mad = val_mad;
    }
    scheduler.step(val_mad);
    if (on_epoch) on_epoch(record);
  }
  return result;
}

TrainResult train(const SimbaModel& model, const Manifest& train_set, const Manifest& val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  return train(model, prepare_set(train_set, model.config()), prepare_set(val_set, model.config()), config,
               on_epoch);
}

}  // namespace simba
