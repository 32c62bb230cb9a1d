#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "gammarank/errors.hpp"
#include "gammarank/parallel.hpp"
#include "gammarank/rng.hpp"
#include "gammarank/special.hpp"

namespace gammarank {

/// P(Z_1 > Z_2 > ... > Z_K) for independent Gamma(shapes[k], rates[k])
/// variables. Shapes must be positive integers; the exact evaluation rests
/// on the negative-binomial embedding, which needs integral shapes.
struct GammaRankProblem {
  std::vector<std::int64_t> shapes;
  std::vector<double> rates;

  std::size_t size() const { return shapes.size(); }

  void validate() const {
    if (shapes.empty() || shapes.size() != rates.size()) {
      throw InputError("rank problem needs matching nonempty shapes/rates");
    }
    for (std::int64_t a : shapes) {
      if (a < 1) throw InputError("rank problem shapes must be integers >= 1");
    }
    for (double r : rates) {
      if (!(r > 0.0) || !std::isfinite(r)) {
        throw InputError("rank problem rates must be positive and finite");
      }
    }
  }

  GammaRankProblem reversed() const {
    GammaRankProblem out = *this;
    std::reverse(out.shapes.begin(), out.shapes.end());
    std::reverse(out.rates.begin(), out.rates.end());
    return out;
  }
};

namespace detail {

// Level-k negative binomial of the embedding: M_k has shape a_{k+1},
// success probability lambda_{k+1}/Lambda_{k+1}.
struct NegBinomialTerm {
  std::int64_t shape;
  double success_prob;
  double failure_prob;

  double log_pmf(std::int64_t m) const {
    return log_gamma(static_cast<double>(m + shape)) -
           log_gamma(static_cast<double>(shape)) -
           log_factorial(static_cast<double>(m)) +
           static_cast<double>(shape) * std::log(success_prob) +
           static_cast<double>(m) * std::log(failure_prob);
  }
};

inline NegBinomialTerm nb_term(const GammaRankProblem& pr,
                               const std::vector<double>& cum_rates,
                               std::size_t level) {
  // level is the 1-based pmf index k in p_k; arrays are 0-based.
  return {pr.shapes[level], pr.rates[level] / cum_rates[level],
          cum_rates[level - 1] / cum_rates[level]};
}

inline std::vector<double> cumulative_rates(const GammaRankProblem& pr) {
  std::vector<double> cum(pr.rates.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pr.rates.size(); ++i) {
    acc += pr.rates[i];
    cum[i] = acc;
  }
  return cum;
}

// Largest admissible m_k over the summation lattice: sum_{j<=k} a_j - k.
inline std::vector<std::int64_t> level_caps(const GammaRankProblem& pr) {
  std::vector<std::int64_t> caps(pr.size() - 1);
  std::int64_t acc = 0;
  for (std::size_t k = 1; k < pr.size(); ++k) {
    acc += pr.shapes[k - 1];
    caps[k - 1] = acc - static_cast<std::int64_t>(k);
  }
  return caps;
}

}  // namespace detail

/// Exact rank probability via the backward sum-product recursion. Linear
/// space: very small probabilities may underflow to 0.0 (use the log
/// variant for those).
inline double gamma_rank_prob(const GammaRankProblem& pr) {
  pr.validate();
  const std::size_t K = pr.size();
  if (K == 1) return 1.0;
  const auto cum = detail::cumulative_rates(pr);
  const auto caps = detail::level_caps(pr);

  std::vector<double> inner;   // g_{k+1}(m), m = 0..caps[k-1]
  std::vector<double> prefix;  // running sums of p_k(m) * g_{k+1}(m)
  for (std::size_t k = K - 1; k >= 1; --k) {
    const auto term = detail::nb_term(pr, cum, k);
    const std::int64_t m_max = caps[k - 1];
    prefix.resize(m_max + 1);
    double acc = 0.0;
    for (std::int64_t m = 0; m <= m_max; ++m) {
      double h = std::exp(term.log_pmf(m));
      if (!inner.empty()) h *= inner[m];
      acc += h;
      prefix[m] = acc;
    }
    if (k == 1) return std::min(prefix[pr.shapes[0] - 1], 1.0);
    const std::int64_t prev_max = caps[k - 2];
    inner.resize(prev_max + 1);
    for (std::int64_t j = 0; j <= prev_max; ++j) {
      inner[j] = prefix[j + pr.shapes[k - 1] - 1];
    }
  }
  return 1.0;  // unreachable
}

/// log P(Z_1 > ... > Z_K), carrying the inner vectors in log space with
/// streaming log-sum-exp; never exponentiates a full term.
inline double log_gamma_rank_prob(const GammaRankProblem& pr) {
  pr.validate();
  const std::size_t K = pr.size();
  if (K == 1) return 0.0;
  const auto cum = detail::cumulative_rates(pr);
  const auto caps = detail::level_caps(pr);

  std::vector<double> log_inner;
  std::vector<double> log_prefix;
  for (std::size_t k = K - 1; k >= 1; --k) {
    const auto term = detail::nb_term(pr, cum, k);
    const std::int64_t m_max = caps[k - 1];
    log_prefix.resize(m_max + 1);
    LogSumAccumulator acc;
    for (std::int64_t m = 0; m <= m_max; ++m) {
      double lh = term.log_pmf(m);
      if (!log_inner.empty()) lh += log_inner[m];
      acc.add(lh);
      log_prefix[m] = acc.value();
    }
    if (k == 1) return std::min(log_prefix[pr.shapes[0] - 1], 0.0);
    const std::int64_t prev_max = caps[k - 2];
    log_inner.resize(prev_max + 1);
    for (std::int64_t j = 0; j <= prev_max; ++j) {
      log_inner[j] = log_prefix[j + pr.shapes[k - 1] - 1];
    }
  }
  return 0.0;  // unreachable
}

struct MaxSummand {
  double log_value;                 // lower-bounds log P(E)
  std::vector<std::int64_t> argmax;  // m*_1..m*_{K-1} (empty for K=1)
};

/// Viterbi pass over the summation lattice: the largest single summand of
/// the nested sum and its index vector. Ties resolve to the smallest m.
inline MaxSummand max_log_summand(const GammaRankProblem& pr) {
  pr.validate();
  const std::size_t K = pr.size();
  if (K == 1) return {0.0, {}};
  const auto cum = detail::cumulative_rates(pr);
  const auto caps = detail::level_caps(pr);

  // value[k-1][m] = log p_k(m) + best continuation; best[k-1][t] = argmax
  // of value over m <= t.
  std::vector<std::vector<double>> value(K - 1);
  std::vector<std::vector<std::int64_t>> best(K - 1);
  std::vector<double> next_best;  // running max of value at level k+1
  for (std::size_t k = K - 1; k >= 1; --k) {
    const auto term = detail::nb_term(pr, cum, k);
    const std::int64_t m_max = caps[k - 1];
    auto& v = value[k - 1];
    auto& b = best[k - 1];
    v.resize(m_max + 1);
    b.resize(m_max + 1);
    std::vector<double> run(m_max + 1);
    for (std::int64_t m = 0; m <= m_max; ++m) {
      v[m] = term.log_pmf(m);
      if (k < K - 1) {
        v[m] += next_best[m];
      }
      if (m == 0 || v[m] > run[m - 1]) {
        run[m] = v[m];
        b[m] = m;
      } else {
        run[m] = run[m - 1];
        b[m] = b[m - 1];
      }
    }
    if (k == 1) break;
    const std::int64_t prev_max = caps[k - 2];
    next_best.resize(prev_max + 1);
    for (std::int64_t j = 0; j <= prev_max; ++j) {
      next_best[j] = run[j + pr.shapes[k - 1] - 1];
    }
  }

  MaxSummand out;
  out.argmax.resize(K - 1);
  std::int64_t bound = pr.shapes[0] - 1;
  for (std::size_t k = 1; k <= K - 1; ++k) {
    const std::int64_t m = best[k - 1][bound];
    out.argmax[k - 1] = m;
    bound = m + pr.shapes[k] - 1;
  }
  out.log_value = value[0][out.argmax[0]];
  return out;
}

struct MonteCarloEstimate {
  double estimate;
  double std_error;
  std::int64_t n_draws;
};

/// Fraction of joint draws satisfying Z_1 > ... > Z_K, with binomial
/// standard error. Draws are split into fixed-size counter-based chunks so
/// the result is identical for any thread count.
inline MonteCarloEstimate gamma_rank_prob_mc(const GammaRankProblem& pr,
                                             std::int64_t n_draws,
                                             std::uint64_t seed,
                                             int threads = 1) {
  pr.validate();
  if (n_draws < 1) throw InputError("n_draws must be >= 1");
  const std::size_t K = pr.size();
  if (K == 1) return {1.0, 0.0, n_draws};

  constexpr std::int64_t chunk_size = 1 << 16;
  const std::int64_t n_chunks = (n_draws + chunk_size - 1) / chunk_size;
  std::vector<std::int64_t> hits(n_chunks, 0);
  parallel_for(n_chunks, resolve_threads(threads), [&](std::size_t c) {
    RngStream rng(seed, c);
    const std::int64_t lo = c * chunk_size;
    const std::int64_t hi = std::min<std::int64_t>(lo + chunk_size, n_draws);
    std::int64_t count = 0;
    for (std::int64_t t = lo; t < hi; ++t) {
      double prev = rng.gamma(static_cast<double>(pr.shapes[0]), pr.rates[0]);
      bool ok = true;
      for (std::size_t k = 1; k < K; ++k) {
        double z = rng.gamma(static_cast<double>(pr.shapes[k]), pr.rates[k]);
        if (!(prev > z)) {
          ok = false;
          break;
        }
        prev = z;
      }
      if (ok) ++count;
    }
    hits[c] = count;
  });
  std::int64_t total = 0;
  for (std::int64_t h : hits) total += h;
  const double p = static_cast<double>(total) / static_cast<double>(n_draws);
  const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(n_draws));
  return {p, se, n_draws};
}

struct ChiSquareFit {
  double statistic;
  int dof;
  double p_value;
  std::int64_t n_bins;
};

/// Chi-square goodness of fit of observed counts against probabilities.
/// Consecutive values are pooled until each bin's expected count is >= 5;
/// residual tail mass and observations fold into the last bin.
inline ChiSquareFit chi_square_fit(const std::vector<std::int64_t>& observed,
                                   const std::vector<double>& probs,
                                   std::int64_t n_total) {
  const double n = static_cast<double>(n_total);
  std::vector<double> expected;
  std::vector<double> obs;
  double cur_exp = 0.0, cur_obs = 0.0;
  for (std::size_t m = 0; m < probs.size(); ++m) {
    cur_exp += probs[m] * n;
    if (m < observed.size()) cur_obs += static_cast<double>(observed[m]);
    if (cur_exp >= 5.0) {
      expected.push_back(cur_exp);
      obs.push_back(cur_obs);
      cur_exp = cur_obs = 0.0;
    }
  }
  double used_exp = cur_exp, used_obs = cur_obs;
  for (double e : expected) used_exp += e;
  for (double o : obs) used_obs += o;
  const double tail_exp = std::max(0.0, n - used_exp);
  const double tail_obs = n - used_obs;
  if (expected.empty()) {
    expected.push_back(cur_exp + tail_exp);
    obs.push_back(cur_obs + tail_obs);
  } else {
    expected.back() += cur_exp + tail_exp;
    obs.back() += cur_obs + tail_obs;
  }
  double stat = 0.0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const double d = obs[i] - expected[i];
    stat += d * d / expected[i];
  }
  const int dof = std::max<int>(1, static_cast<int>(expected.size()) - 1);
  const double p = boost::math::gamma_q(dof / 2.0, stat / 2.0);
  return {stat, dof, p, static_cast<std::int64_t>(expected.size())};
}

struct EmbeddingReport {
  std::int64_t n_draws = 0;
  std::int64_t equivalence_violations = 0;
  std::vector<ChiSquareFit> marginal_fits;        // one per M_k
  std::vector<std::vector<double>> correlations;  // (K-1)x(K-1)
};

/// Simulates the superposed Poisson processes behind the embedding and
/// reports: (i) violations of Z_k > Z_{k+1} <=> M_k < M_{k-1} + a_k (must be
/// zero), (ii) chi-square fits of each M_k marginal against its negative
/// binomial pmf, (iii) pairwise correlations of the M_k (the independence
/// conjecture is only probed empirically, never relied on).
inline EmbeddingReport poisson_embedding_check(const GammaRankProblem& pr,
                                               std::int64_t n_draws,
                                               std::uint64_t seed) {
  pr.validate();
  const std::size_t K = pr.size();
  if (K < 2) throw InputError("embedding check needs K >= 2");
  const auto cum = detail::cumulative_rates(pr);

  EmbeddingReport report;
  report.n_draws = n_draws;
  std::vector<std::vector<std::int64_t>> histograms(K - 1);
  std::vector<double> sum(K - 1, 0.0), sum_sq(K - 1, 0.0);
  std::vector<std::vector<double>> cross(K - 1,
                                         std::vector<double>(K - 1, 0.0));

  std::vector<std::vector<double>> points(K);
  std::vector<double> z(K);
  std::vector<std::int64_t> m_counts(K - 1);
  RngStream rng(seed);
  for (std::int64_t t = 0; t < n_draws; ++t) {
    // Z_k is the a_k-th arrival of process k; keep all arrival times so the
    // superposed counts can be read at any later Z.
    double horizon = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      points[k].clear();
      double time = 0.0;
      for (std::int64_t j = 0; j < pr.shapes[k]; ++j) {
        time += rng.exponential(pr.rates[k]);
        points[k].push_back(time);
      }
      z[k] = time;
      if (k >= 1) horizon = std::max(horizon, time);
    }
    for (std::size_t k = 0; k < K; ++k) {
      double time = points[k].back();
      while (time <= horizon) {
        time += rng.exponential(pr.rates[k]);
        points[k].push_back(time);
      }
    }
    // M_k = number of points of processes 1..k in (0, Z_{k+1}].
    for (std::size_t k = 0; k + 1 < K; ++k) {
      std::int64_t count = 0;
      for (std::size_t j = 0; j <= k; ++j) {
        for (double pt : points[j]) {
          if (pt <= z[k + 1]) ++count;
        }
      }
      m_counts[k] = count;
    }
    for (std::size_t k = 0; k + 1 < K; ++k) {
      const bool order_holds = z[k] > z[k + 1];
      const std::int64_t bound =
          (k == 0 ? 0 : m_counts[k - 1]) + pr.shapes[k];
      if (order_holds != (m_counts[k] < bound)) {
        ++report.equivalence_violations;
      }
      auto& hist = histograms[k];
      if (static_cast<std::size_t>(m_counts[k]) >= hist.size()) {
        hist.resize(m_counts[k] + 1, 0);
      }
      ++hist[m_counts[k]];
      sum[k] += static_cast<double>(m_counts[k]);
      sum_sq[k] += static_cast<double>(m_counts[k]) *
                   static_cast<double>(m_counts[k]);
      for (std::size_t j = 0; j + 1 < K; ++j) {
        cross[k][j] += static_cast<double>(m_counts[k]) *
                       static_cast<double>(m_counts[j]);
      }
    }
  }

  for (std::size_t k = 0; k + 1 < K; ++k) {
    const auto term = detail::nb_term(pr, cum, k + 1);
    std::vector<double> probs(histograms[k].size() + 64);
    for (std::size_t m = 0; m < probs.size(); ++m) {
      probs[m] = std::exp(term.log_pmf(static_cast<std::int64_t>(m)));
    }
    report.marginal_fits.push_back(
        chi_square_fit(histograms[k], probs, n_draws));
  }
  report.correlations.assign(K - 1, std::vector<double>(K - 1, 1.0));
  const double n = static_cast<double>(n_draws);
  for (std::size_t k = 0; k + 1 < K; ++k) {
    for (std::size_t j = 0; j + 1 < K; ++j) {
      const double cov = cross[k][j] / n - (sum[k] / n) * (sum[j] / n);
      const double vk = sum_sq[k] / n - (sum[k] / n) * (sum[k] / n);
      const double vj = sum_sq[j] / n - (sum[j] / n) * (sum[j] / n);
      report.correlations[k][j] = cov / std::sqrt(vk * vj);
    }
  }
  return report;
}

}  // namespace gammarank
