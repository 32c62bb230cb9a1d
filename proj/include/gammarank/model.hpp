#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gammarank/errors.hpp"
#include "gammarank/rankprob.hpp"
#include "gammarank/structures.hpp"

namespace gammarank {

enum class DataMode { gamma, counts };

/// Shape and scale parameters shared by every mixture component. The shapes
/// must be integers: the exact rank-probability evaluation requires
/// integral gamma shapes, so estimation rounds before landing here.
struct SharedParams {
  int alpha;    // observation shape
  int alpha0;   // prior shape
  double nu0;   // prior scale

  void validate() const {
    if (alpha < 1) throw InputError("alpha must be an integer >= 1");
    if (alpha0 < 1) throw InputError("alpha0 must be an integer >= 1");
    if (!(nu0 > 0.0) || !std::isfinite(nu0)) {
      throw InputError("nu0 must be positive and finite");
    }
  }
};

/// Per-block statistics of one data row under one structure.
struct BlockStats {
  std::vector<double> sums;          // s_k
  std::vector<double> log_products;  // log t_k = sum of log x over the block
  std::vector<int> sizes;            // n_k (sample counts)
  // Count model only:
  std::vector<double> size_sums;  // n_k = sum of library sizes over the block
  std::vector<double> log_u;      // log u_k
};

inline BlockStats block_stats(std::span<const double> row,
                              const OrderedStructure& eta,
                              const ExperimentLayout& layout) {
  if (static_cast<int>(row.size()) != layout.n_samples()) {
    throw InputError("row length does not match layout");
  }
  const SampleBlocks blocks = structure_blocks(eta, layout);
  BlockStats stats;
  const int K = eta.n_blocks();
  stats.sums.assign(K, 0.0);
  stats.log_products.assign(K, 0.0);
  stats.sizes = blocks.sizes;
  for (int k = 0; k < K; ++k) {
    for (int i : blocks.sample_sets[k]) {
      stats.sums[k] += row[i];
      stats.log_products[k] += std::log(row[i]);
    }
  }
  return stats;
}

/// Count-model statistics; log u depends on alpha0*nu0 through the
/// size-adjusted denominators.
inline BlockStats block_stats_counts(std::span<const double> row,
                                     const OrderedStructure& eta,
                                     const ExperimentLayout& layout,
                                     const SharedParams& params) {
  if (!layout.library_sizes()) {
    throw InputError("count model requires library sizes in the layout");
  }
  const auto& lib = *layout.library_sizes();
  const SampleBlocks blocks = structure_blocks(eta, layout);
  BlockStats stats;
  const int K = eta.n_blocks();
  stats.sums.assign(K, 0.0);
  stats.size_sums.assign(K, 0.0);
  stats.log_u.assign(K, 0.0);
  stats.sizes = blocks.sizes;
  const double a0nu0 = static_cast<double>(params.alpha0) * params.nu0;
  for (int k = 0; k < K; ++k) {
    for (int i : blocks.sample_sets[k]) {
      stats.sums[k] += row[i];
      stats.size_sums[k] += lib[i];
    }
    const double log_denom = std::log(a0nu0 + stats.size_sums[k]);
    for (int i : blocks.sample_sets[k]) {
      stats.log_u[k] += row[i] * (std::log(lib[i]) - log_denom);
    }
  }
  return stats;
}

namespace detail {

inline void require_positive_row(std::span<const double> row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (!(row[i] > 0.0) || !std::isfinite(row[i])) {
      throw InputError("gamma model requires strictly positive values (bad "
                       "entry at column " +
                       std::to_string(i + 1) + ")");
    }
  }
}

inline void require_count_row(std::span<const double> row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (!(row[i] >= 0.0) || row[i] != std::floor(row[i]) ||
        !std::isfinite(row[i])) {
      throw InputError("count model requires nonnegative integers (bad "
                       "entry at column " +
                       std::to_string(i + 1) + ")");
    }
  }
}

// Shared part of the gamma-gamma component density: everything except the
// block-order factor K! * P_ord.
inline double log_density_gamma_core(std::span<const double> row,
                                     const OrderedStructure& eta,
                                     const ExperimentLayout& layout,
                                     const SharedParams& params,
                                     BlockStats* stats_out = nullptr) {
  params.validate();
  require_positive_row(row);
  const BlockStats stats = block_stats(row, eta, layout);
  const int K = eta.n_blocks();
  const int n = layout.n_samples();
  const double alpha = params.alpha;
  const double alpha0 = params.alpha0;
  const double a0nu0 = alpha0 * params.nu0;

  double log_c = -n * log_gamma(alpha) - K * log_gamma(alpha0) +
                 alpha0 * K * std::log(a0nu0 / alpha);
  double sum_log_x = 0.0;
  for (int k = 0; k < K; ++k) sum_log_x += stats.log_products[k];
  double center = 0.0;
  for (int k = 0; k < K; ++k) {
    const double a_k = alpha0 + alpha * stats.sizes[k];
    log_c += log_gamma(a_k);
    center -= a_k * std::log(stats.sums[k] + a0nu0 / alpha);
  }
  if (stats_out) *stats_out = stats;
  return log_c + (alpha - 1.0) * sum_log_x + center;
}

}  // namespace detail

/// Builds the gamma-rank problem of the gamma-gamma component: block k maps
/// to Gamma(alpha0 + alpha*n_k, alpha0*nu0 + alpha*s_k), and the component
/// carries the decreasing-order probability P(Z_1 > ... > Z_K).
inline GammaRankProblem rank_problem_gamma(const BlockStats& stats,
                                           const SharedParams& params) {
  GammaRankProblem pr;
  const int K = static_cast<int>(stats.sums.size());
  pr.shapes.resize(K);
  pr.rates.resize(K);
  for (int k = 0; k < K; ++k) {
    pr.shapes[k] = params.alpha0 +
                   static_cast<std::int64_t>(params.alpha) * stats.sizes[k];
    pr.rates[k] = static_cast<double>(params.alpha0) * params.nu0 +
                  params.alpha * stats.sums[k];
  }
  return pr;
}

/// Log of the structured gamma-gamma component density.
inline double log_density_gamma(std::span<const double> row,
                                const OrderedStructure& eta,
                                const ExperimentLayout& layout,
                                const SharedParams& params) {
  BlockStats stats;
  const double core =
      detail::log_density_gamma_core(row, eta, layout, params, &stats);
  const int K = eta.n_blocks();
  double out = core + log_gamma(static_cast<double>(K) + 1.0);
  if (K > 1) {
    out += log_gamma_rank_prob(rank_problem_gamma(stats, params));
  }
  return out;
}

/// Unordered (Kendziorski-style) reduction: the ordering factor K! * P_ord
/// is absent and the component factorizes over blocks.
inline double log_density_gamma_unordered(std::span<const double> row,
                                          const OrderedStructure& partition,
                                          const ExperimentLayout& layout,
                                          const SharedParams& params) {
  return detail::log_density_gamma_core(row, partition, layout, params);
}

/// Log of the Poisson-gamma count component. The ordering event here is
/// increasing (conjugacy puts the gamma on the means, not inverse means),
/// so the decreasing-order engine runs on the reversed sequences.
inline double log_density_counts(std::span<const double> row,
                                 const OrderedStructure& eta,
                                 const ExperimentLayout& layout,
                                 const SharedParams& params,
                                 bool ordered = true) {
  params.validate();
  detail::require_count_row(row);
  const BlockStats stats = block_stats_counts(row, eta, layout, params);
  const int K = eta.n_blocks();
  const double alpha0 = params.alpha0;
  const double a0nu0 = alpha0 * params.nu0;

  double out = alpha0 * K * std::log(a0nu0) - K * log_gamma(alpha0);
  for (std::size_t i = 0; i < row.size(); ++i) {
    out -= log_factorial(row[i]);
  }
  for (int k = 0; k < K; ++k) {
    out -= alpha0 * std::log(a0nu0 + stats.size_sums[k]);
    out += stats.log_u[k] + log_gamma(stats.sums[k] + alpha0);
  }
  if (!ordered) return out;

  out += log_gamma(static_cast<double>(K) + 1.0);
  if (K > 1) {
    GammaRankProblem pr;
    pr.shapes.resize(K);
    pr.rates.resize(K);
    for (int k = 0; k < K; ++k) {
      pr.shapes[k] =
          params.alpha0 + static_cast<std::int64_t>(stats.sums[k]);
      pr.rates[k] = a0nu0 + stats.size_sums[k];
    }
    out += log_gamma_rank_prob(pr.reversed());
  }
  return out;
}

/// Count-model analogue of the unordered reduction.
inline double log_density_counts_unordered(std::span<const double> row,
                                           const OrderedStructure& partition,
                                           const ExperimentLayout& layout,
                                           const SharedParams& params) {
  return log_density_counts(row, partition, layout, params, false);
}

}  // namespace gammarank
