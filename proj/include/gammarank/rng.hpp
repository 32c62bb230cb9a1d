#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "gammarank/special.hpp"

namespace gammarank {

/// SplitMix64 counter stream. Output i of stream (seed, stream) is a pure
/// function of (seed, stream, i), so draws are reproducible bit-for-bit and
/// independent streams can be handed to rows or Monte Carlo chunks without
/// sharing state.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : base_(mix(mix(seed + kGolden) ^ mix(stream + 0xD1B54A32D192ED03ULL))) {}

  std::uint64_t next_u64() { return mix(base_ + (++counter_) * kGolden); }

  /// Uniform double strictly inside (0,1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal (Box-Muller, cosine branch).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Gamma(shape, rate) via Marsaglia-Tsang squeeze; shape < 1 boosted.
  double gamma(double shape, double rate) {
    if (shape < 1.0) {
      double u = uniform();
      return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double t = 1.0 + c * x;
      if (t <= 0.0) continue;
      double v = t * t * t;
      double u = uniform();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
        return d * v / rate;
      }
    }
  }

  /// Exponential with the given rate.
  double exponential(double rate) { return -std::log(uniform()) / rate; }

  std::int64_t poisson(double mean) {
    return mean < 10.0 ? poisson_knuth(mean) : poisson_ptrs(mean);
  }

  /// Index draw proportional to weights (expects nonnegative entries).
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    return weights.size() - 1;
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  std::int64_t poisson_knuth(double mean) {
    const double limit = std::exp(-mean);
    std::int64_t k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

  // Hormann's PTRS transformed rejection, exact for mean >= 10.
  std::int64_t poisson_ptrs(double mean) {
    const double log_mean = std::log(mean);
    const double b = 0.931 + 2.53 * std::sqrt(mean);
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
      double u = uniform() - 0.5;
      double v = uniform();
      double us = 0.5 - std::abs(u);
      double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
      if (us >= 0.07 && v <= v_r) return static_cast<std::int64_t>(kf);
      if (kf < 0.0 || (us < 0.013 && v > us)) continue;
      if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
          kf * log_mean - mean - log_gamma(kf + 1.0)) {
        return static_cast<std::int64_t>(kf);
      }
    }
  }

  std::uint64_t base_;
  std::uint64_t counter_ = 0;
};

/// Dirichlet(1,...,1) draw, for random EM starts.
inline std::vector<double> random_simplex(RngStream& rng, std::size_t k) {
  std::vector<double> w(k);
  double total = 0.0;
  for (auto& x : w) {
    x = rng.exponential(1.0);
    total += x;
  }
  for (auto& x : w) x /= total;
  return w;
}

}  // namespace gammarank
