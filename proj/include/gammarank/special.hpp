#pragma once

#include <cmath>
#include <limits>
#include <span>

namespace gammarank {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

/// Thread-safe log Gamma for strictly positive arguments.
inline double log_gamma(double x) {
#if defined(__GLIBC__) || defined(__APPLE__)
  int sign = 0;
  return ::lgamma_r(x, &sign);
#else
  return std::lgamma(x);
#endif
}

/// log(x!) = logGamma(x+1).
inline double log_factorial(double x) { return log_gamma(x + 1.0); }

/// Streaming log-sum-exp: accumulates log(sum_i exp(x_i)) without overflow.
class LogSumAccumulator {
 public:
  void add(double x) {
    if (x == neg_inf) return;
    if (x <= max_) {
      sum_ += std::exp(x - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - x) + 1.0;
      max_ = x;
    }
  }

  double value() const {
    if (sum_ == 0.0) return neg_inf;
    return max_ + std::log(sum_);
  }

 private:
  double max_ = neg_inf;
  double sum_ = 0.0;  // sum of exp(x_i - max_)
};

inline double log_sum_exp(std::span<const double> xs) {
  LogSumAccumulator acc;
  for (double x : xs) acc.add(x);
  return acc.value();
}

}  // namespace gammarank
