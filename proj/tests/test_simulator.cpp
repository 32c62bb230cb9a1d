#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <catch2/catch_amalgamated.hpp>
#include <gammarank/em.hpp>
#include <gammarank/simulator.hpp>

#include "support.hpp"

using namespace gammarank;

namespace {

ExperimentLayout balanced_layout(int p, int m) {
  std::vector<int> group_of;
  for (int j = 0; j < p; ++j) {
    for (int r = 0; r < m; ++r) group_of.push_back(j);
  }
  return ExperimentLayout(group_of, p);
}

}  // namespace

TEST_CASE("simulation is deterministic and thread-invariant", "[simulator]") {
  SimulationConfig config{balanced_layout(3, 3),
                          SharedParams{10, 3, 32.0},
                          enumerate_ordered_structures(3),
                          std::vector<double>(13, 1.0 / 13.0),
                          200,
                          123,
                          DataMode::gamma,
                          1};
  const SimulationResult a = simulate(config);
  config.threads = 8;
  const SimulationResult b = simulate(config);
  CHECK(a.labels == b.labels);
  CHECK(a.data.data() == b.data.data());
  CHECK(a.latent_means.data() == b.latent_means.data());

  config.seed = 124;
  const SimulationResult c = simulate(config);
  CHECK(a.data.data() != c.data.data());
}

TEST_CASE("latent means respect the block order", "[simulator]") {
  // eta = (2)(1): group 2 carries the smaller latent mean
  const auto catalog = enumerate_ordered_structures(2);
  SimulationConfig config{balanced_layout(2, 3),
                          SharedParams{10, 3, 32.0},
                          catalog,
                          {0.0, 0.0, 1.0},  // degenerate on (2)(1)
                          2000,
                          31415,
                          DataMode::gamma,
                          4};
  const SimulationResult sim = simulate(config);
  for (std::size_t g = 0; g < 2000; ++g) {
    CHECK(sim.latent_means(g, 1) < sim.latent_means(g, 0));
  }
}

TEST_CASE("group means order correctly at strong separation", "[simulator]") {
  const auto catalog = enumerate_ordered_structures(2);
  SimulationConfig config{balanced_layout(2, 10),
                          SharedParams{200, 1, 32.0},
                          catalog,
                          {0.0, 0.0, 1.0},  // (2)(1)
                          5000,
                          2718,
                          DataMode::gamma,
                          4};
  const SimulationResult sim = simulate(config);
  std::size_t ordered = 0;
  for (std::size_t g = 0; g < 5000; ++g) {
    double mean1 = 0.0, mean2 = 0.0;
    for (int i = 0; i < 10; ++i) mean1 += sim.data(g, i);
    for (int i = 10; i < 20; ++i) mean2 += sim.data(g, i);
    if (mean2 < mean1) ++ordered;
  }
  CHECK(static_cast<double>(ordered) / 5000.0 >= 0.99);
}

TEST_CASE("pooled CV matches the mixture moments on null rows",
          "[simulator]") {
  // For the null structure, Var(X)/E(X)^2 = (1+1/alpha)(a0-1)/(a0-2) - 1.
  const int alpha = 10, alpha0 = 5;
  SimulationConfig config{balanced_layout(2, 4),
                          SharedParams{alpha, alpha0, 32.0},
                          enumerate_ordered_structures(2),
                          {1.0, 0.0, 0.0},
                          20000,
                          5883,
                          DataMode::gamma,
                          4};
  const SimulationResult sim = simulate(config);
  double sum = 0.0, sum_sq = 0.0;
  const double n_values = 20000.0 * 8.0;
  for (std::size_t g = 0; g < 20000; ++g) {
    for (int i = 0; i < 8; ++i) {
      sum += sim.data(g, i);
      sum_sq += sim.data(g, i) * sim.data(g, i);
    }
  }
  const double mean = sum / n_values;
  const double var = sum_sq / n_values - mean * mean;
  const double cv2 = var / (mean * mean);
  const double predicted =
      (1.0 + 1.0 / alpha) * (alpha0 - 1.0) / (alpha0 - 2.0) - 1.0;
  CHECK_THAT(cv2, Catch::Matchers::WithinRel(predicted, 0.06));
}

TEST_CASE("sorted prior sampling matches rejection sampling", "[simulator]") {
  // psi_1 (the largest inverse mean) for K=3, sorted draws vs rejection
  const int alpha0 = 3;
  const double rate = 3.0 * 32.0;
  RngStream sorted_rng(1001), reject_rng(1002);
  std::vector<double> sorted_draws, rejected_draws;
  for (int t = 0; t < 10000; ++t) {
    double a = sorted_rng.gamma(alpha0, rate);
    double b = sorted_rng.gamma(alpha0, rate);
    double c = sorted_rng.gamma(alpha0, rate);
    sorted_draws.push_back(std::max({a, b, c}));
  }
  while (rejected_draws.size() < 10000) {
    double a = reject_rng.gamma(alpha0, rate);
    double b = reject_rng.gamma(alpha0, rate);
    double c = reject_rng.gamma(alpha0, rate);
    if (a > b && b > c) rejected_draws.push_back(a);
  }
  CHECK(testsupport::ks_two_sample(sorted_draws, rejected_draws) > 0.001);
}

TEST_CASE("null-row marginal matches the compound gamma", "[simulator]") {
  const SharedParams params{10, 3, 32.0};
  SimulationConfig config{balanced_layout(2, 1),
                          params,
                          enumerate_ordered_structures(2),
                          {1.0, 0.0, 0.0},
                          8000,
                          777777,
                          DataMode::gamma,
                          4};
  const SimulationResult sim = simulate(config);

  SECTION("single coordinate against the Beta-form CDF") {
    std::vector<double> x1;
    for (std::size_t g = 0; g < 8000; ++g) x1.push_back(sim.data(g, 0));
    const double c = params.alpha0 * params.nu0 / params.alpha;
    auto cdf = [&](double x) {
      return boost::math::ibeta(double(params.alpha), double(params.alpha0),
                                x / (x + c));
    };
    CHECK(testsupport::ks_one_sample(x1, cdf) > 0.001);
  }

  SECTION("importance check: E_sim[p(X)] equals the integral of p^2") {
    const ExperimentLayout layout = balanced_layout(2, 1);
    const auto null2 = parse_structure("(12)", 2);
    double mean = 0.0, mean_sq = 0.0;
    for (std::size_t g = 0; g < 8000; ++g) {
      const double p =
          std::exp(log_density_gamma(sim.data.row(g), null2, layout, params));
      mean += p;
      mean_sq += p * p;
    }
    mean /= 8000.0;
    mean_sq /= 8000.0;
    const double se = std::sqrt((mean_sq - mean * mean) / 8000.0);

    boost::math::quadrature::exp_sinh<double> integrator;
    auto outer = [&](double x1) {
      auto inner = [&](double x2) {
        const std::vector<double> row = {x1, x2};
        const double p =
            std::exp(log_density_gamma(row, null2, layout, params));
        return p * p;
      };
      return integrator.integrate(inner, 1e-8);
    };
    const double integral = integrator.integrate(outer, 1e-8);
    CHECK(std::abs(mean - integral) <= 4.0 * se);
  }
}

TEST_CASE("count simulation round-trips through the count density",
          "[simulator]") {
  // end-to-end check of the increasing-order convention: EM on count data
  // recovers the generating weights
  std::vector<int> group_of = {0, 0, 0, 1, 1, 1};
  std::vector<double> lib = {8.0, 12.0, 10.0, 9.0, 11.0, 10.0};
  const ExperimentLayout layout(group_of, 2, lib);
  const SharedParams params{1, 2, 0.05};  // E[mu] = 1/nu0 = 20
  const std::vector<double> truth = {0.25, 0.45, 0.30};
  SimulationConfig config{layout,
                          params,
                          enumerate_ordered_structures(2),
                          truth,
                          4000,
                          10007,
                          DataMode::counts,
                          4};
  const SimulationResult sim = simulate(config);
  for (std::size_t g = 0; g < 10; ++g) {
    for (int i = 0; i < 6; ++i) {
      CHECK(sim.data(g, i) == std::floor(sim.data(g, i)));
    }
  }
  const Matrix logdens = log_density_matrix_counts(
      sim.data, config.catalog, layout, params, 4);
  EmOptions opt;
  opt.max_iters = 200;
  const MixtureFit fit = em_fit(logdens, {}, opt);
  const PosteriorCheck check =
      empirical_posterior_check(sim, fit, truth);
  CHECK(check.weight_inf_error <= 0.05);
  CHECK(check.accuracy > 0.6);
}

TEST_CASE("posterior check reports the confusion structure", "[simulator]") {
  const SharedParams params{10, 3, 32.0};
  const std::vector<double> degenerate = {0.0, 1.0, 0.0};
  SimulationConfig config{balanced_layout(2, 3),
                          params,
                          enumerate_ordered_structures(2),
                          degenerate,
                          500,
                          90125,
                          DataMode::gamma,
                          4};
  const SimulationResult sim = simulate(config);
  const Matrix logdens = log_density_matrix_gamma(
      sim.data, config.catalog, balanced_layout(2, 3), params, 4);
  const MixtureFit fit = em_fit(logdens);

  const PosteriorCheck check = empirical_posterior_check(sim, fit, degenerate);
  // every row truly comes from structure 1: one nonzero confusion row
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t a = 0; a < 3; ++a) {
      if (t != 1) CHECK(check.confusion(t, a) == 0.0);
    }
  }

  // negative control: shuffling the labels destroys recovery
  SimulationResult shuffled = sim;
  RngStream rng(1);
  for (std::size_t g = 0; g < shuffled.labels.size(); ++g) {
    shuffled.labels[g] = static_cast<int>(rng.uniform() * 3);
  }
  const PosteriorCheck broken =
      empirical_posterior_check(shuffled, fit, degenerate);
  CHECK(broken.accuracy < 0.6);
  CHECK(check.accuracy > 0.9);
}

TEST_CASE("invalid simulation configs are rejected", "[simulator]") {
  const auto catalog = enumerate_ordered_structures(2);
  SimulationConfig config{balanced_layout(2, 2),
                          SharedParams{10, 3, 32.0},
                          catalog,
                          {0.5, 0.5, 0.5},
                          10,
                          1,
                          DataMode::gamma,
                          1};
  CHECK_THROWS_AS(simulate(config), ConfigError);  // weights sum != 1
  config.weights = {0.5, 0.25, 0.25};
  config.n_rows = 0;
  CHECK_THROWS_AS(simulate(config), ConfigError);
  config.n_rows = 10;
  config.mode = DataMode::counts;
  CHECK_THROWS_AS(simulate(config), ConfigError);  // no library sizes
}
