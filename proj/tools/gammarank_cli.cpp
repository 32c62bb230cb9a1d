// gammarank: gamma-based clustering via ordered means.
//
// Subcommands: catalog, rankprob, density, estimate-params, simulate,
// fit, assign, compare. Exit codes: 0 ok, 2 input error, 3 numerical
// failure, 4 configuration error.

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <gammarank/gammarank.hpp>

namespace {

using namespace gammarank;

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string field;
  while (std::getline(ss, field, ',')) {
    out.push_back(detail::parse_double(field, "list argument"));
  }
  return out;
}

std::vector<std::int64_t> parse_int_list(const std::string& csv) {
  std::vector<std::int64_t> out;
  for (double v : parse_double_list(csv)) {
    if (v != std::floor(v)) {
      throw InputError("expected integers in list argument");
    }
    out.push_back(static_cast<std::int64_t>(v));
  }
  return out;
}

DataMode parse_mode(const std::string& mode) {
  if (mode == "gamma") return DataMode::gamma;
  if (mode == "counts") return DataMode::counts;
  throw ConfigError("--mode must be 'gamma' or 'counts'");
}

int run_catalog(int p, bool no_null, bool counts_only,
                const std::string& out_path) {
  auto catalog = enumerate_ordered_structures(p);
  if (no_null) catalog = without_null(std::move(catalog));
  if (counts_only) {
    std::cout << catalog.size() << '\n';
    return 0;
  }
  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file = detail::open_output(out_path);
    os = &file;
  }
  *os << "index\tK\tstructure\tunordered_parent\n";
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    *os << i << '\t' << catalog[i].n_blocks() << '\t' << catalog[i].text()
        << '\t' << catalog[i].unordered_parent().text() << '\n';
  }
  return 0;
}

int run_rankprob(const std::string& shapes_csv, const std::string& rates_csv,
                 bool log_mode, bool max_summand, std::int64_t mc_draws,
                 std::uint64_t seed, int threads) {
  GammaRankProblem pr{parse_int_list(shapes_csv),
                      parse_double_list(rates_csv)};
  if (mc_draws > 0) {
    const auto est = gamma_rank_prob_mc(pr, mc_draws, seed, threads);
    std::cout << "estimate\t" << format_double(est.estimate) << '\n'
              << "std_error\t" << format_double(est.std_error) << '\n';
    return 0;
  }
  if (max_summand) {
    const auto best = max_log_summand(pr);
    std::cout << "max_log_summand\t" << format_double(best.log_value) << '\n'
              << "argmax\t";
    for (std::size_t i = 0; i < best.argmax.size(); ++i) {
      std::cout << (i ? "," : "") << best.argmax[i];
    }
    std::cout << '\n';
    return 0;
  }
  if (log_mode) {
    std::cout << format_double(log_gamma_rank_prob(pr)) << '\n';
  } else {
    std::cout << format_double(gamma_rank_prob(pr)) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gamma-based clustering via ordered means"};
  app.require_subcommand(1);

  // ---- catalog
  auto* catalog_cmd =
      app.add_subcommand("catalog", "enumerate the ordered-structure catalog");
  int catalog_p = 2;
  bool catalog_no_null = false, catalog_counts_only = false;
  std::string catalog_out;
  catalog_cmd->add_option("--p", catalog_p, "number of groups")->required();
  catalog_cmd->add_flag("--no-null", catalog_no_null,
                        "drop the single-block null structure");
  catalog_cmd->add_flag("--counts-only", catalog_counts_only,
                        "print only the catalog size");
  catalog_cmd->add_option("--output", catalog_out, "write to file");

  // ---- rankprob
  auto* rank_cmd = app.add_subcommand(
      "rankprob", "P(Z1 > ... > ZK) for independent gamma variables");
  std::string shapes_csv, rates_csv;
  bool rank_log = false, rank_max = false;
  std::int64_t rank_mc = 0;
  std::uint64_t rank_seed = 0;
  int rank_threads = 0;
  rank_cmd->add_option("--shapes", shapes_csv, "integer shapes, comma-separated")
      ->required();
  rank_cmd->add_option("--rates", rates_csv, "positive rates, comma-separated")
      ->required();
  rank_cmd->add_flag("--log", rank_log, "print the log probability");
  rank_cmd->add_flag("--max-summand", rank_max,
                     "print the largest log summand and its index vector");
  rank_cmd->add_option("--mc", rank_mc, "Monte Carlo draws instead of the DP");
  rank_cmd->add_option("--seed", rank_seed, "Monte Carlo seed");
  rank_cmd->add_option("--threads", rank_threads, "worker threads");

  // ---- density
  auto* density_cmd = app.add_subcommand(
      "density", "log component density of one row under one structure");
  std::string d_data, d_layout, d_mode = "gamma", d_structure;
  std::size_t d_row = 0;
  int d_alpha = 0, d_alpha0 = 0;
  double d_nu0 = 0.0;
  std::optional<double> d_floor;
  density_cmd->add_option("--data", d_data)->required();
  density_cmd->add_option("--layout", d_layout)->required();
  density_cmd->add_option("--mode", d_mode, "gamma|counts");
  density_cmd->add_option("--row", d_row, "0-based row index")->required();
  density_cmd->add_option("--structure", d_structure, "e.g. \"(13)(2)\"")
      ->required();
  density_cmd->add_option("--alpha", d_alpha)->required();
  density_cmd->add_option("--alpha0", d_alpha0)->required();
  density_cmd->add_option("--nu0", d_nu0)->required();
  density_cmd->add_option("--floor", d_floor,
                          "clamp gamma-mode values below this epsilon");

  // ---- estimate-params
  auto* est_cmd = app.add_subcommand(
      "estimate-params", "estimate shared parameters from gamma-mode data");
  std::string e_data, e_layout;
  int e_grid_hi = 20, e_threads = 0;
  bool e_no_null = false;
  est_cmd->add_option("--data", e_data)->required();
  est_cmd->add_option("--layout", e_layout)->required();
  est_cmd->add_option("--grid-max", e_grid_hi, "largest alpha0 candidate");
  est_cmd->add_flag("--no-null", e_no_null, "exclude the null structure");
  est_cmd->add_option("--threads", e_threads);

  // ---- simulate
  auto* sim_cmd =
      app.add_subcommand("simulate", "draw synthetic data from the model");
  SimulateOptions sim;
  std::string sim_weights_csv, sim_mode = "gamma", sim_layout_path;
  sim_cmd->add_option("--out-prefix", sim.out_prefix)->required();
  sim_cmd->add_option("--p", sim.n_groups, "groups (synthetic layout)");
  sim_cmd->add_option("--replicates", sim.replicates,
                      "replicates per group (synthetic layout)");
  sim_cmd->add_option("--layout", sim_layout_path, "layout file to reuse");
  sim_cmd->add_option("--weights", sim_weights_csv,
                      "mixing weights over the catalog (default uniform)");
  sim_cmd->add_flag("--no-null", [&sim](std::int64_t) {
    sim.include_null = false;
  }, "exclude the null structure from the catalog");
  sim_cmd->add_option("--G", sim.n_rows, "rows to simulate")->required();
  sim_cmd->add_option("--seed", sim.seed);
  sim_cmd->add_option("--mode", sim_mode, "gamma|counts");
  sim_cmd->add_option("--alpha", sim.params.alpha)->required();
  sim_cmd->add_option("--alpha0", sim.params.alpha0)->required();
  sim_cmd->add_option("--nu0", sim.params.nu0)->required();
  sim_cmd->add_option("--lib-size", sim.lib_size,
                      "library size for synthetic count layouts");
  sim_cmd->add_flag("--emit-latent", sim.emit_latent,
                    "append latent means to the truth file");
  sim_cmd->add_option("--threads", sim.threads);

  // ---- fit
  auto* fit_cmd =
      app.add_subcommand("fit", "fit mixing proportions by EM and assign");
  FitOptions fit;
  std::string fit_mode = "gamma";
  bool fit_csv = false, fit_no_null = false;
  fit_cmd->add_option("--data", fit.data_path)->required();
  fit_cmd->add_option("--layout", fit.layout_path)->required();
  fit_cmd->add_option("--out-dir", fit.out_dir)->required();
  fit_cmd->add_option("--mode", fit_mode, "gamma|counts");
  fit_cmd->add_flag("--csv", fit_csv, "inputs are comma-separated");
  fit_cmd->add_option("--floor", fit.floor_eps,
                      "clamp gamma-mode values below this epsilon");
  fit_cmd->add_option("--alpha", fit.alpha, "override observation shape");
  fit_cmd->add_option("--alpha0", fit.alpha0, "override prior shape");
  fit_cmd->add_option("--nu0", fit.nu0, "override prior scale");
  fit_cmd->add_flag("--estimate-params", fit.estimate_params,
                    "estimate shared parameters before fitting");
  fit_cmd->add_option("--grid-max", fit.grid_hi, "largest alpha0 candidate");
  fit_cmd->add_option("--iters", fit.max_iters, "maximum EM iterations");
  fit_cmd->add_option("--tol", fit.rel_tol, "relative log-likelihood stop");
  fit_cmd->add_option("--init", fit.init, "uniform|random");
  fit_cmd->add_option("--seed", fit.seed, "seed for random init");
  fit_cmd->add_flag("--refit", fit.refit,
                    "alternate EM with integer grid updates of the shapes");
  fit_cmd->add_option("--filter-threshold", fit.filter_threshold,
                      "drop structures whose unordered parent never exceeds "
                      "this posterior in a pre-fit");
  fit_cmd->add_flag("--no-null", fit_no_null, "exclude the null structure");
  fit_cmd->add_flag("--posterior", fit.emit_posterior,
                    "write the posterior matrix");
  fit_cmd->add_option("--threads", fit.threads);

  // ---- assign
  auto* assign_cmd = app.add_subcommand(
      "assign", "turn a posterior matrix into cluster assignments");
  std::string a_posterior, a_out, a_mode = "bayes";
  double a_c = 0.5;
  assign_cmd->add_option("--posterior", a_posterior, "posterior.tsv from fit")
      ->required();
  assign_cmd->add_option("--out", a_out)->required();
  assign_cmd->add_option("--mode", a_mode, "bayes|threshold");
  assign_cmd->add_option("--c", a_c, "posterior threshold");

  // ---- compare
  auto* compare_cmd = app.add_subcommand(
      "compare", "adjusted Rand index between two assignment files");
  std::string c_a, c_b;
  compare_cmd->add_option("a", c_a, "first assignment file")->required();
  compare_cmd->add_option("b", c_b, "second assignment file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 4;
  }

  try {
    if (*catalog_cmd) {
      return run_catalog(catalog_p, catalog_no_null, catalog_counts_only,
                         catalog_out);
    }
    if (*rank_cmd) {
      return run_rankprob(shapes_csv, rates_csv, rank_log, rank_max, rank_mc,
                          rank_seed, rank_threads);
    }
    if (*density_cmd) {
      const DataMode mode = parse_mode(d_mode);
      const DataMatrix data = read_matrix(d_data, mode, {'\t', d_floor});
      const BoundLayout bound =
          bind_layout(read_layout(d_layout), data.sample_ids);
      if (d_row >= data.row_ids.size()) {
        throw InputError("--row is out of range");
      }
      const auto eta =
          parse_structure(d_structure, bound.layout.n_groups());
      const SharedParams params{d_alpha, d_alpha0, d_nu0};
      const double ld =
          mode == DataMode::gamma
              ? log_density_gamma(data.values.row(d_row), eta, bound.layout,
                                  params)
              : log_density_counts(data.values.row(d_row), eta, bound.layout,
                                   params);
      std::cout << format_double(ld) << '\n';
      return 0;
    }
    if (*est_cmd) {
      const DataMatrix data = read_matrix(e_data, DataMode::gamma, {});
      const BoundLayout bound =
          bind_layout(read_layout(e_layout), data.sample_ids);
      ParamEstimateConfig cfg;
      cfg.grid_hi = e_grid_hi;
      cfg.include_null = !e_no_null;
      cfg.threads = e_threads;
      const ParamEstimate est =
          estimate_shared_params(data.values, bound.layout, cfg);
      std::cout << "alpha\t" << est.params.alpha << '\n'
                << "alpha0\t" << est.params.alpha0 << '\n'
                << "nu0\t" << format_double(est.params.nu0) << '\n'
                << "pooled_cv2\t" << format_double(est.pooled_cv2) << '\n';
      std::cout << "alpha0_profile:\n";
      for (const auto& [a0, ll] : est.alpha0_profile) {
        std::cout << a0 << '\t' << format_double(ll)
                  << (a0 == est.alpha0_argmax ? "\t*" : "") << '\n';
      }
      return 0;
    }
    if (*sim_cmd) {
      sim.mode = parse_mode(sim_mode);
      if (!sim_layout_path.empty()) sim.layout_path = sim_layout_path;
      if (!sim_weights_csv.empty() && sim_weights_csv != "uniform") {
        sim.weights = parse_double_list(sim_weights_csv);
      }
      run_simulate(sim);
      return 0;
    }
    if (*fit_cmd) {
      fit.mode = parse_mode(fit_mode);
      fit.delimiter = fit_csv ? ',' : '\t';
      fit.include_null = !fit_no_null;
      run_fit(fit);
      return 0;
    }
    if (*assign_cmd) {
      const PosteriorFile pf = read_posterior(a_posterior);
      ClusterAssignment assignment;
      if (a_mode == "bayes") {
        assignment = assign_bayes(pf.posterior);
      } else if (a_mode == "threshold") {
        assignment = assign_threshold(pf.posterior, a_c);
      } else {
        throw ConfigError("--mode must be 'bayes' or 'threshold'");
      }
      // rebuild structures from the posterior header for the output text
      std::vector<OrderedStructure> catalog;
      int p = 0;
      for (const auto& text : pf.structure_texts) {
        for (char ch : text) p = std::max(p, ch >= '1' && ch <= '8' ? ch - '0' : 0);
      }
      for (const auto& text : pf.structure_texts) {
        catalog.push_back(parse_structure(text, p));
      }
      write_assignments(a_out, pf.row_ids, catalog, assignment);
      const auto summary = cluster_summary(assignment, catalog);
      std::cout << "clusters\t" << summary.clusters.size() << '\n'
                << "unassigned\t" << summary.n_unassigned << '\n';
      return 0;
    }
    if (*compare_cmd) {
      const AssignmentFile fa = read_assignments(c_a);
      const AssignmentFile fb = read_assignments(c_b);
      if (fa.row_ids.size() != fb.row_ids.size()) {
        throw InputError("assignment files cover different row sets");
      }
      std::unordered_map<std::string, std::string> labels_b;
      for (std::size_t i = 0; i < fb.row_ids.size(); ++i) {
        labels_b.emplace(fb.row_ids[i], fb.cluster_labels[i]);
      }
      std::unordered_map<std::string, int> dict_a, dict_b;
      std::vector<int> a_ids, b_ids;
      for (std::size_t i = 0; i < fa.row_ids.size(); ++i) {
        auto it = labels_b.find(fa.row_ids[i]);
        if (it == labels_b.end()) {
          throw InputError("row '" + fa.row_ids[i] +
                           "' is missing from the second file");
        }
        if (fa.cluster_labels[i] == unassigned_label ||
            it->second == unassigned_label) {
          throw InputError("adjusted Rand index requires fully assigned "
                           "rows (row '" + fa.row_ids[i] + "')");
        }
        a_ids.push_back(
            dict_a.emplace(fa.cluster_labels[i], dict_a.size()).first->second);
        b_ids.push_back(
            dict_b.emplace(it->second, dict_b.size()).first->second);
      }
      std::cout << format_double(adjusted_rand_index(a_ids, b_ids)) << '\n';
      return 0;
    }
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
