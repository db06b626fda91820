#include "simba/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace simba {

BiasFit fit_bias(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_bias: length mismatch");
  double mean_x = 0.0;
  double mean_y = 0.0;
  CompensatedSum sxx, syy, sxy;
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    ++n;
    const double dx = x[i] - mean_x;
    const double dy = y[i] - mean_y;
    mean_x += dx / static_cast<double>(n);
    mean_y += dy / static_cast<double>(n);
    sxx.add(dx * (x[i] - mean_x));
    syy.add(dy * (y[i] - mean_y));
    sxy.add(dx * (y[i] - mean_y));
  }

  BiasFit fit;
  fit.n = n;
  const double vx = sxx.value();
  const double vy = syy.value();
  const double cxy = sxy.value();
  if (vx > 0.0) {
    fit.slope = cxy / vx;
    fit.intercept = mean_y - fit.slope * mean_x;
  } else {
    fit.intercept = mean_y;
  }
  if (vx > 0.0 && vy > 0.0) fit.pearson_r = std::clamp(cxy / std::sqrt(vx * vy), -1.0, 1.0);
  return fit;
}

BiasFit bias_analysis(std::span<const double> relative_age, std::span<const double> abs_error) {
  if (relative_age.size() < 3) throw std::invalid_argument("bias_analysis needs at least 3 samples");
  BiasFit fit = fit_bias(relative_age, abs_error);
  if (!fit.pearson_r) {
    // Exactly-equal inputs give an exactly-zero co-moment, so these checks are reliable.
    bool x_varies = false;
    for (double v : relative_age) x_varies = x_varies || v != relative_age.front();
    if (!x_varies)
      throw DegenerateVariance("all relative ages are equal; correlation and slope are undefined", std::nullopt);
    throw DegenerateVariance("all absolute errors are equal; correlation is undefined", fit);
  }
  return fit;
}

double mean_absolute(std::span<const double> values) {
  CompensatedSum s;
  for (double v : values) s.add(std::abs(v));
  return values.empty() ? 0.0 : s.value() / static_cast<double>(values.size());
}

}  // namespace simba
