#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gammarank/cluster.hpp"
#include "gammarank/em.hpp"
#include "gammarank/errors.hpp"
#include "gammarank/matrix.hpp"
#include "gammarank/model.hpp"
#include "gammarank/parallel.hpp"
#include "gammarank/rng.hpp"
#include "gammarank/structures.hpp"

namespace gammarank {

struct SimulationConfig {
  ExperimentLayout layout;
  SharedParams params;
  std::vector<OrderedStructure> catalog;
  std::vector<double> weights;  // over the catalog
  std::size_t n_rows = 0;
  std::uint64_t seed = 0;
  DataMode mode = DataMode::gamma;
  int threads = 1;

  void validate() const {
    params.validate();
    if (catalog.empty() || weights.size() != catalog.size()) {
      throw ConfigError("simulation weights must match the catalog");
    }
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw ConfigError("simulation weights must be >= 0");
      total += w;
    }
    if (!(std::abs(total - 1.0) < 1e-9)) {
      throw ConfigError("simulation weights must sum to 1");
    }
    if (n_rows == 0) throw ConfigError("simulation needs n_rows >= 1");
    if (mode == DataMode::counts && !layout.library_sizes()) {
      throw ConfigError("count simulation requires library sizes");
    }
    for (const auto& eta : catalog) {
      if (eta.n_groups() != layout.n_groups()) {
        throw ConfigError("catalog does not match layout group count");
      }
    }
  }
};

struct SimulationResult {
  Matrix data;                    // G x n
  std::vector<int> labels;        // generating catalog index per row
  Matrix latent_means;            // G x p: mean of each group's block
};

/// Draws rows from the generative model. The ordered prior is realized by
/// sorting i.i.d. Gamma(alpha0, alpha0*nu0) draws, which is exactly the
/// K!-conditioned law. Each row consumes its own counter-based stream
/// derived from (seed, row), so output is identical for any thread count.
inline SimulationResult simulate(const SimulationConfig& config) {
  config.validate();
  const int n = config.layout.n_samples();
  const int p = config.layout.n_groups();
  const std::size_t G = config.n_rows;

  SimulationResult out;
  out.data = Matrix(G, n);
  out.labels.resize(G);
  out.latent_means = Matrix(G, p);

  const auto& groups = config.layout.group_of();
  const double alpha = config.params.alpha;
  const double alpha0 = config.params.alpha0;
  const double prior_rate = alpha0 * config.params.nu0;

  parallel_for(G, resolve_threads(config.threads), [&](std::size_t g) {
    RngStream rng(config.seed, g);
    const std::size_t which = rng.categorical(config.weights);
    out.labels[g] = static_cast<int>(which);
    const OrderedStructure& eta = config.catalog[which];
    const int K = eta.n_blocks();

    std::vector<double> draws(K);
    for (int k = 0; k < K; ++k) draws[k] = rng.gamma(alpha0, prior_rate);
    std::sort(draws.begin(), draws.end());

    auto row = out.data.row(g);
    if (config.mode == DataMode::gamma) {
      // draws sorted ascending; inverse means decrease across blocks, so
      // block k (k-th smallest mean) takes the (K-1-k)-th draw.
      for (int i = 0; i < n; ++i) {
        const int k = eta.block_of_group(groups[i]);
        const double psi = draws[K - 1 - k];
        row[i] = rng.gamma(alpha, alpha * psi);
      }
      for (int j = 0; j < p; ++j) {
        out.latent_means(g, j) = 1.0 / draws[K - 1 - eta.block_of_group(j)];
      }
    } else {
      const auto& lib = *config.layout.library_sizes();
      for (int i = 0; i < n; ++i) {
        const int k = eta.block_of_group(groups[i]);
        row[i] = static_cast<double>(rng.poisson(lib[i] * draws[k]));
      }
      for (int j = 0; j < p; ++j) {
        out.latent_means(g, j) = draws[eta.block_of_group(j)];
      }
    }
  });
  return out;
}

struct PosteriorCheck {
  Matrix confusion;          // true index x assigned index
  double weight_inf_error;   // |pi_hat - pi|_inf
  double accuracy;           // fraction of rows recovering their structure
};

/// Compares a fitted mixture against the simulation truth: confusion matrix
/// of generating vs Bayes-assigned structures plus weight-recovery error.
inline PosteriorCheck empirical_posterior_check(
    const SimulationResult& truth, const MixtureFit& fit,
    const std::vector<double>& true_weights) {
  if (fit.weights.size() != true_weights.size()) {
    throw InputError("fitted and true weights differ in length");
  }
  PosteriorCheck check;
  const std::size_t C = true_weights.size();
  check.confusion = Matrix(C, C);
  const ClusterAssignment assignment = assign_bayes(fit.posterior);
  std::size_t correct = 0;
  for (std::size_t g = 0; g < truth.labels.size(); ++g) {
    const int t = truth.labels[g];
    const int a = assignment.structure_index[g];
    check.confusion(t, a) += 1.0;
    if (t == a) ++correct;
  }
  check.accuracy =
      static_cast<double>(correct) / static_cast<double>(truth.labels.size());
  check.weight_inf_error = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    check.weight_inf_error = std::max(
        check.weight_inf_error, std::abs(fit.weights[c] - true_weights[c]));
  }
  return check;
}

}  // namespace gammarank
