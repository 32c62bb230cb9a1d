#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gammarank/matrix.hpp"
#include "gammarank/model.hpp"
#include "gammarank/parallel.hpp"
#include "gammarank/special.hpp"
#include "gammarank/structures.hpp"

namespace gammarank {

/// Result of fitting mixing proportions on a fixed log-density matrix.
struct MixtureFit {
  std::vector<double> weights;        // pi over the catalog
  Matrix posterior;                   // G x C, rows sum to 1
  std::vector<double> loglik_trace;   // one entry per EM iteration
  int iterations = 0;
  bool converged = false;
};

/// log sum_eta pi_eta exp(logdens_eta) for one row.
inline double log_marginal(std::span<const double> logdens_row,
                           std::span<const double> pi) {
  LogSumAccumulator acc;
  for (std::size_t c = 0; c < logdens_row.size(); ++c) {
    if (pi[c] > 0.0) acc.add(std::log(pi[c]) + logdens_row[c]);
  }
  return acc.value();
}

/// Precomputes log p(x_g | eta) for every row and catalog entry; the one
/// designated parallel region of the pipeline.
template <typename Density>
Matrix build_log_density_matrix(std::size_t n_rows,
                                std::size_t n_components, Density&& density,
                                int threads = 1) {
  Matrix out(n_rows, n_components);
  parallel_for(n_rows, resolve_threads(threads), [&](std::size_t g) {
    for (std::size_t c = 0; c < n_components; ++c) {
      out(g, c) = density(g, c);
    }
  });
  return out;
}

inline Matrix log_density_matrix_gamma(
    const Matrix& data, const std::vector<OrderedStructure>& catalog,
    const ExperimentLayout& layout, const SharedParams& params,
    int threads = 1) {
  return build_log_density_matrix(
      data.rows(), catalog.size(),
      [&](std::size_t g, std::size_t c) {
        return log_density_gamma(data.row(g), catalog[c], layout, params);
      },
      threads);
}

inline Matrix log_density_matrix_counts(
    const Matrix& data, const std::vector<OrderedStructure>& catalog,
    const ExperimentLayout& layout, const SharedParams& params,
    int threads = 1) {
  return build_log_density_matrix(
      data.rows(), catalog.size(),
      [&](std::size_t g, std::size_t c) {
        return log_density_counts(data.row(g), catalog[c], layout, params);
      },
      threads);
}

struct EmOptions {
  int max_iters = 100;   // matches the reference runs (100 EM cycles)
  double rel_tol = 1e-8;
  int threads = 1;
};

/// Mixture EM on precomputed log densities. E-step normalizes
/// pi_eta * exp(logdens) by log-sum-exp; M-step averages posteriors.
/// The log likelihood is nondecreasing across iterations.
inline MixtureFit em_fit(const Matrix& logdens,
                         std::optional<std::vector<double>> init = {},
                         const EmOptions& options = {}) {
  const std::size_t G = logdens.rows();
  const std::size_t C = logdens.cols();
  if (G == 0 || C == 0) throw InputError("em_fit needs data and a catalog");

  MixtureFit fit;
  if (init) {
    if (init->size() != C) {
      throw InputError("initial weights do not match catalog size");
    }
    double total = 0.0;
    for (double w : *init) {
      if (!(w >= 0.0)) throw InputError("initial weights must be >= 0");
      total += w;
    }
    if (!(std::abs(total - 1.0) < 1e-6)) {
      throw InputError("initial weights must sum to 1");
    }
    fit.weights = *init;
  } else {
    fit.weights.assign(C, 1.0 / static_cast<double>(C));
  }

  fit.posterior = Matrix(G, C);
  std::vector<double> row_loglik(G);
  const int threads = resolve_threads(options.threads);
  double prev_ll = neg_inf;
  for (int iter = 0; iter < options.max_iters; ++iter) {
    std::vector<double> log_pi(C, neg_inf);
    for (std::size_t c = 0; c < C; ++c) {
      if (fit.weights[c] > 0.0) log_pi[c] = std::log(fit.weights[c]);
    }
    parallel_for(G, threads, [&](std::size_t g) {
      auto ld = logdens.row(g);
      auto post = fit.posterior.row(g);
      LogSumAccumulator acc;
      for (std::size_t c = 0; c < C; ++c) acc.add(log_pi[c] + ld[c]);
      const double lm = acc.value();
      row_loglik[g] = lm;
      for (std::size_t c = 0; c < C; ++c) {
        post[c] = std::exp(log_pi[c] + ld[c] - lm);
      }
    });
    double ll = 0.0;
    for (double l : row_loglik) ll += l;
    fit.loglik_trace.push_back(ll);
    ++fit.iterations;

    // M-step: fixed column order keeps the reduction deterministic.
    std::vector<double> colmean(C, 0.0);
    for (std::size_t g = 0; g < G; ++g) {
      auto post = fit.posterior.row(g);
      for (std::size_t c = 0; c < C; ++c) colmean[c] += post[c];
    }
    for (std::size_t c = 0; c < C; ++c) {
      colmean[c] /= static_cast<double>(G);
    }
    fit.weights = std::move(colmean);

    if (iter > 0 && std::abs(ll - prev_ll) <= options.rel_tol * std::abs(ll)) {
      fit.converged = true;
      break;
    }
    prev_ll = ll;
  }
  return fit;
}

/// a' H a for the Hessian of the negative log likelihood, evaluated as
/// sum_g T_a(x_g)^2 with T_a built from density ratios against a reference
/// structure (last catalog entry by default). Nonnegative by construction;
/// strictly positive iff the data pin down every direction.
inline double hessian_quadratic_form(const Matrix& logdens,
                                     std::span<const double> pi,
                                     std::span<const double> a,
                                     std::optional<std::size_t> reference = {}) {
  const std::size_t G = logdens.rows();
  const std::size_t C = logdens.cols();
  if (pi.size() != C) throw InputError("pi does not match catalog size");
  if (a.size() != C - 1) {
    throw InputError("direction vector must have catalog size - 1 entries");
  }
  for (double w : pi) {
    if (!(w > 0.0)) {
      throw InputError("hessian form requires strictly positive weights");
    }
  }
  const std::size_t ref = reference.value_or(C - 1);
  if (ref >= C) throw InputError("reference structure index out of range");

  double total = 0.0;
  for (std::size_t g = 0; g < G; ++g) {
    auto ld = logdens.row(g);
    const double lm = log_marginal(ld, pi);
    const double f_ref = std::exp(ld[ref] - lm);
    double t = 0.0;
    std::size_t ai = 0;
    for (std::size_t c = 0; c < C; ++c) {
      if (c == ref) continue;
      t += a[ai++] * (std::exp(ld[c] - lm) - f_ref);
    }
    total += t * t;
  }
  return total;
}

struct ParamEstimateConfig {
  int grid_lo = 1;
  int grid_hi = 20;
  int em_iters = 50;
  double em_tol = 1e-8;
  bool include_null = true;
  int threads = 1;
};

struct ParamEstimate {
  SharedParams params;
  double pooled_cv2 = 0.0;    // pooled within-group squared CV
  double nu0_anchor = 0.0;    // grand mean of row means
  std::vector<std::pair<int, double>> alpha0_profile;  // (alpha0, loglik)
  int alpha0_argmax = 0;
};

/// Three-stage shared-parameter estimate for the gamma model:
///   1. alpha from the pooled within-replicate-group CV (alpha = 1/CV^2),
///   2. nu0 anchored at the grand mean of row means,
///   3. alpha0 from an integer grid, scored by the unordered-mixture
///      log likelihood with weights fit by a short EM.
inline ParamEstimate estimate_shared_params(
    const Matrix& data, const ExperimentLayout& layout,
    const ParamEstimateConfig& config = {}) {
  const std::size_t G = data.rows();
  const int n = layout.n_samples();
  const int p = layout.n_groups();
  if (G == 0) throw InputError("no data rows");
  if (static_cast<int>(data.cols()) != n) {
    throw InputError("data columns do not match layout");
  }
  for (std::size_t g = 0; g < G; ++g) {
    detail::require_positive_row(data.row(g));
  }

  std::vector<std::vector<int>> replicates(p);
  for (int i = 0; i < n; ++i) replicates[layout.group_of()[i]].push_back(i);
  bool any_replicated = false;
  for (const auto& r : replicates) any_replicated |= r.size() >= 2;
  if (!any_replicated) {
    throw InputError(
        "cannot estimate the observation CV: no group has 2+ replicates");
  }

  double cv2_sum = 0.0;
  std::int64_t cv2_count = 0;
  double grand = 0.0;
  for (std::size_t g = 0; g < G; ++g) {
    auto row = data.row(g);
    double row_sum = 0.0;
    for (double x : row) row_sum += x;
    grand += row_sum / n;
    for (const auto& reps : replicates) {
      const std::size_t m = reps.size();
      if (m < 2) continue;
      double mean = 0.0;
      for (int i : reps) mean += row[i];
      mean /= static_cast<double>(m);
      double ss = 0.0;
      for (int i : reps) ss += (row[i] - mean) * (row[i] - mean);
      const double var = ss / static_cast<double>(m - 1);
      cv2_sum += var / (mean * mean);
      ++cv2_count;
    }
  }
  ParamEstimate est;
  est.pooled_cv2 = cv2_sum / static_cast<double>(cv2_count);
  est.nu0_anchor = grand / static_cast<double>(G);

  const int alpha_hat =
      std::max<int>(1, static_cast<int>(std::llround(1.0 / est.pooled_cv2)));

  auto unordered = enumerate_unordered_partitions(p);
  if (!config.include_null) unordered = without_null(std::move(unordered));

  double best_ll = neg_inf;
  int best_a0 = config.grid_lo;
  for (int a0 = config.grid_lo; a0 <= config.grid_hi; ++a0) {
    const SharedParams trial{alpha_hat, a0, est.nu0_anchor};
    Matrix logdens = build_log_density_matrix(
        G, unordered.size(),
        [&](std::size_t g, std::size_t c) {
          return log_density_gamma_unordered(data.row(g), unordered[c],
                                             layout, trial);
        },
        config.threads);
    EmOptions opt;
    opt.max_iters = config.em_iters;
    opt.rel_tol = config.em_tol;
    opt.threads = config.threads;
    const MixtureFit fit = em_fit(logdens, {}, opt);
    const double ll = fit.loglik_trace.back();
    est.alpha0_profile.emplace_back(a0, ll);
    if (ll > best_ll) {
      best_ll = ll;
      best_a0 = a0;
    }
  }
  est.alpha0_argmax = best_a0;
  est.params = SharedParams{alpha_hat, best_a0, est.nu0_anchor};
  return est;
}

struct RefitResult {
  SharedParams params;
  MixtureFit fit;
  std::vector<double> cycle_loglik;
};

/// Optional refit mode: alternates short EM passes with a 2-d integer grid
/// update of (alpha, alpha0) around the current values. Both half-steps can
/// only raise the log likelihood.
inline RefitResult em_fit_with_refit(const Matrix& data,
                                     const ExperimentLayout& layout,
                                     const std::vector<OrderedStructure>& catalog,
                                     SharedParams params,
                                     int cycles = 10, int iters_per_cycle = 10,
                                     int grid_radius = 2, int threads = 1) {
  RefitResult out;
  std::optional<std::vector<double>> pi;
  MixtureFit fit;
  for (int cycle = 0; cycle < cycles; ++cycle) {
    Matrix logdens =
        log_density_matrix_gamma(data, catalog, layout, params, threads);
    EmOptions opt;
    opt.max_iters = iters_per_cycle;
    opt.rel_tol = 0.0;
    opt.threads = threads;
    fit = em_fit(logdens, pi, opt);
    pi = fit.weights;

    double best_ll = neg_inf;
    SharedParams best = params;
    for (int da = -grid_radius; da <= grid_radius; ++da) {
      for (int d0 = -grid_radius; d0 <= grid_radius; ++d0) {
        const int a = params.alpha + da;
        const int a0 = params.alpha0 + d0;
        if (a < 1 || a0 < 1) continue;
        const SharedParams trial{a, a0, params.nu0};
        Matrix ld =
            log_density_matrix_gamma(data, catalog, layout, trial, threads);
        double ll = 0.0;
        for (std::size_t g = 0; g < ld.rows(); ++g) {
          ll += log_marginal(ld.row(g), *pi);
        }
        if (ll > best_ll) {
          best_ll = ll;
          best = trial;
        }
      }
    }
    params = best;
    out.cycle_loglik.push_back(best_ll);
  }
  out.params = params;
  out.fit = std::move(fit);
  return out;
}

}  // namespace gammarank
