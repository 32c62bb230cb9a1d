#pragma once

// Shared oracles and generators for the test suite. Everything here is
// independent of the library's computation paths: Stirling numbers by
// recurrence, Kolmogorov-Smirnov by direct formula, Monte Carlo by the
// named SplitMix64 counter streams.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <gammarank/rankprob.hpp>
#include <gammarank/rng.hpp>

namespace testsupport {

/// Stirling numbers of the second kind via the standard recurrence.
inline std::vector<std::vector<std::uint64_t>> stirling2(int max_n) {
  std::vector<std::vector<std::uint64_t>> s(max_n + 1);
  for (int n = 0; n <= max_n; ++n) {
    s[n].assign(n + 1, 0);
    if (n == 0) {
      s[0][0] = 1;
      continue;
    }
    for (int k = 1; k <= n; ++k) {
      const std::uint64_t same = k <= n - 1 ? s[n - 1][k] : 0;
      s[n][k] = k * same + s[n - 1][k - 1];
    }
  }
  return s;
}

/// Fubini (ordered Bell) number: sum over k of k! * S(p,k).
inline std::uint64_t fubini(int p) {
  const auto s = stirling2(p);
  std::uint64_t total = 0;
  std::uint64_t fact = 1;
  for (int k = 1; k <= p; ++k) {
    fact *= k;
    total += fact * s[p][k];
  }
  return total;
}

/// Random rank problem with shapes in [1, max_shape] and log-uniform rates.
inline gammarank::GammaRankProblem random_problem(gammarank::RngStream& rng,
                                                  int K, int max_shape,
                                                  double log10_rate_span = 2) {
  gammarank::GammaRankProblem pr;
  for (int k = 0; k < K; ++k) {
    pr.shapes.push_back(
        1 + static_cast<std::int64_t>(rng.uniform() * max_shape));
    pr.rates.push_back(
        std::pow(10.0, (rng.uniform() * 2.0 - 1.0) * log10_rate_span / 2.0));
  }
  return pr;
}

/// Asymptotic two-sided Kolmogorov-Smirnov p-value.
inline double ks_p_value(double d, double n_effective) {
  const double lambda =
      (std::sqrt(n_effective) + 0.12 + 0.11 / std::sqrt(n_effective)) * d;
  double sum = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term =
        2.0 * std::pow(-1.0, j - 1) * std::exp(-2.0 * j * j * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-12) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

/// Two-sample KS test p-value.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j]) {
      ++i;
    } else {
      ++j;
    }
    const double fa = static_cast<double>(i) / a.size();
    const double fb = static_cast<double>(j) / b.size();
    d = std::max(d, std::abs(fa - fb));
  }
  const double ne = static_cast<double>(a.size()) * b.size() /
                    static_cast<double>(a.size() + b.size());
  return ks_p_value(d, ne);
}

/// One-sample KS test p-value against a cdf callable.
template <typename Cdf>
double ks_one_sample(std::vector<double> x, Cdf&& cdf) {
  std::sort(x.begin(), x.end());
  double d = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  return ks_p_value(d, n);
}

}  // namespace testsupport
