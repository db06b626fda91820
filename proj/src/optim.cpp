#include "simba/optim.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace simba {

template <typename T>
void Adam<T>::step(Parameters<T>& params, const Parameters<T>& grads, double lr) {
  ++steps_;
  const T b1 = static_cast<T>(config_.beta1);
  const T b2 = static_cast<T>(config_.beta2);
  const T correction1 = static_cast<T>(1.0 - std::pow(config_.beta1, static_cast<double>(steps_)));
  const T correction2 = static_cast<T>(1.0 - std::pow(config_.beta2, static_cast<double>(steps_)));
  const T eps = static_cast<T>(config_.eps);
  const T rate = static_cast<T>(lr);

  // Walk the four structures in lockstep through their shared visit order.
  std::vector<Matrix<T>*> p, m, v;
  std::vector<const Matrix<T>*> g;
  params.for_each(1, [&](const ParamInfo&, Matrix<T>& x) { p.push_back(&x); });
  first_.for_each(1, [&](const ParamInfo&, Matrix<T>& x) { m.push_back(&x); });
  second_.for_each(1, [&](const ParamInfo&, Matrix<T>& x) { v.push_back(&x); });
  grads.for_each(1, [&](const ParamInfo&, const Matrix<T>& x) { g.push_back(&x); });
  if (p.size() != g.size()) throw std::invalid_argument("Adam: gradient structure mismatch");

  for (std::size_t i = 0; i < p.size(); ++i) {
    auto mi = m[i]->array();
    auto vi = v[i]->array();
    const auto gi = g[i]->array();
    mi = b1 * mi + (T(1) - b1) * gi;
    vi = b2 * vi + (T(1) - b2) * gi.square();
    p[i]->array() -= rate * (mi / correction1) / ((vi / correction2).sqrt() + eps);
  }
}

template class Adam<float>;
template class Adam<double>;

PlateauScheduler::PlateauScheduler(double initial_lr, PlateauConfig config)
    : initial_lr_(initial_lr), config_(config), best_(std::numeric_limits<double>::infinity()) {
  if (!(initial_lr > 0.0)) throw std::invalid_argument("initial learning rate must be positive");
  if (!(config.factor > 0.0 && config.factor < 1.0)) throw std::invalid_argument("factor must be in (0, 1)");
  if (config.patience < 0 || config.cooldown < 0 || config.threshold < 0.0)
    throw std::invalid_argument("patience, cooldown and threshold must be non-negative");
}

bool PlateauScheduler::step(double metric) {
  if (metric < best_ - config_.threshold) {
    best_ = metric;
    bad_epochs_ = 0;
  } else {
    ++bad_epochs_;
  }
  if (cooldown_counter_ > 0) {
    --cooldown_counter_;
    bad_epochs_ = 0;
  }
  if (bad_epochs_ > config_.patience) {
    ++reductions_;
    cooldown_counter_ = config_.cooldown;
    bad_epochs_ = 0;
    return true;
  }
  return false;
}

double PlateauScheduler::lr() const { return initial_lr_ * std::pow(config_.factor, reductions_); }

}  // namespace simba
