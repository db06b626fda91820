#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>

#include "simba/errors.hpp"

namespace simba {

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      compensation_ += (sum_ - t) + x;
    } else {
      compensation_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

/// Linear relationship between relative age (x) and absolute error (y).
struct BiasFit {
  std::optional<double> pearson_r;  // undefined when either variance is zero
  double slope = 0.0;
  double intercept = 0.0;
  std::size_t n = 0;
};

class DegenerateVariance : public Error {
 public:
  DegenerateVariance(const std::string& what, std::optional<BiasFit> partial)
      : Error(what), partial_(partial) {}
  /// Present when the relative ages vary, so the regression line still exists.
  const std::optional<BiasFit>& partial() const noexcept { return partial_; }

 private:
  std::optional<BiasFit> partial_;
};

/// Single pass, Welford-style co-moment updates with compensated accumulators.
/// Does not throw on degenerate input; see bias_analysis for the checked form.
BiasFit fit_bias(std::span<const double> relative_age, std::span<const double> abs_error);

/// Pearson r and OLS of abs_error on relative_age. Requires n >= 3.
/// Throws DegenerateVariance when r is undefined (carrying the fit when x varies).
BiasFit bias_analysis(std::span<const double> relative_age, std::span<const double> abs_error);

double mean_absolute(std::span<const double> values);

}  // namespace simba
