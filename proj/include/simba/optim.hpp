#pragma once

#include "simba/model.hpp"

namespace simba {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction, one moment pair per parameter tensor.
template <typename T>
class Adam {
 public:
  Adam(const Parameters<T>& like, AdamConfig config = {})
      : config_(config), first_(like.zeros_like()), second_(like.zeros_like()) {}

  void step(Parameters<T>& params, const Parameters<T>& grads, double lr);

  long step_count() const { return steps_; }
  const Parameters<T>& first_moment() const { return first_; }
  const Parameters<T>& second_moment() const { return second_; }

 private:
  AdamConfig config_;
  Parameters<T> first_;
  Parameters<T> second_;
  long steps_ = 0;
};

/// Reduce-on-plateau for a metric that should decrease. The learning rate is
/// always lr0 * factor^reductions, recomputed rather than accumulated.
struct PlateauConfig {
  int patience = 2;
  double factor = 0.8;
  int cooldown = 5;
  double threshold = 1e-4;  // absolute
};

class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, PlateauConfig config);

  /// Feeds one epoch's metric; returns true if the rate was reduced.
  bool step(double metric);

  double lr() const;
  int reductions() const { return reductions_; }
  int epochs_since_improvement() const { return bad_epochs_; }
  int cooldown_remaining() const { return cooldown_counter_; }
  double best() const { return best_; }

 private:
  double initial_lr_;
  PlateauConfig config_;
  double best_;
  int bad_epochs_ = 0;
  int cooldown_counter_ = 0;
  int reductions_ = 0;
};

}  // namespace simba
