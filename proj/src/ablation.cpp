#include "simba/ablation.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "simba/errors.hpp"

namespace simba {

std::vector<AblationConfig> ablation_configs() {
  return {
      {"baseline", {false, false, false}},
      {"gender+chrono", {true, true, false}},
      {"gender+relative", {true, false, true}},
      {"chrono+relative", {false, true, true}},
      {"full", {true, true, true}},
  };
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

const AblationMedian& AblationResult::median_for(const std::string& name) const {
  for (const auto& m : medians)
    if (m.config.name == name) return m;
  throw std::out_of_range("no ablation config named " + name);
}

const AblationRun& AblationResult::median_run(const std::string& name) const {
  std::vector<const AblationRun*> matching;
  for (const auto& r : runs)
    if (r.config.name == name) matching.push_back(&r);
  if (matching.empty()) throw std::out_of_range("no ablation config named " + name);
  std::sort(matching.begin(), matching.end(), [](auto* a, auto* b) {
    return a->val_mad != b->val_mad ? a->val_mad < b->val_mad : a->seed < b->seed;
  });
  return *matching[(matching.size() - 1) / 2];
}

AblationResult run_ablation_matrix(const PreparedSet& train_set, const PreparedSet& val_set,
                                   const ModelConfig& base, const TrainConfig& config,
                                   std::span<const std::uint64_t> seeds, int jobs,
                                   const AblationProgress& progress) {
  if (seeds.empty()) throw std::invalid_argument("ablation needs at least one seed");
  const auto configs = ablation_configs();

  AblationResult result;
  for (const auto& c : configs)
    for (auto seed : seeds) result.runs.push_back(AblationRun{c, seed, 0.0, {}, {}});

  std::mutex mutex;
  std::exception_ptr failure;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      std::size_t index;
      {
        std::lock_guard lock(mutex);
        if (failure || next >= result.runs.size()) return;
        index = next++;
      }
      AblationRun& run = result.runs[index];
      try {
        ModelConfig mc = base;
        mc.flags = run.config.flags;
        TrainConfig tc = config;
        tc.seed = run.seed;
        if (jobs > 1) tc.deterministic = true;  // one thread per run
        const auto trained = train(SimbaModel(mc, run.seed), train_set, val_set, tc);
        run.history = trained.history;
        run.val_report = evaluate(trained.best.model, val_set, tc.deterministic, tc.workers);
        run.val_mad = run.val_report.mad;
        if (progress) {
          std::lock_guard lock(mutex);
          progress(run);
        }
      } catch (const NonFiniteGradient&) {
        std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
        return;
      } catch (const std::exception& e) {
        std::lock_guard lock(mutex);
        if (!failure)
          failure = std::make_exception_ptr(Error("ablation config '" + run.config.name + "', seed " +
                                                  std::to_string(run.seed) + ": " + e.what()));
        return;
      }
    }
  };

  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  for (const auto& c : configs) {
    std::vector<double> mads;
    for (const auto& r : result.runs)
      if (r.config.name == c.name) mads.push_back(r.val_mad);
    result.medians.push_back({c, median(std::move(mads))});
  }
  return result;
}

}  // namespace simba
