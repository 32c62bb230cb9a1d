#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gammarank/errors.hpp"
#include "gammarank/matrix.hpp"
#include "gammarank/structures.hpp"

namespace gammarank {

/// Row-to-structure assignment. Unassigned rows (threshold mode only) carry
/// structure index -1 and are reported, never dropped.
struct ClusterAssignment {
  std::vector<int> structure_index;   // -1 = unassigned
  std::vector<double> posterior_prob; // posterior of the chosen structure
  double threshold = 0.0;             // 0 in Bayes mode
  bool bayes_mode = true;

  std::size_t n_rows() const { return structure_index.size(); }
  std::size_t n_unassigned() const {
    return std::count(structure_index.begin(), structure_index.end(), -1);
  }
  bool fully_assigned() const { return n_unassigned() == 0; }
};

namespace detail {

inline int argmax_lowest_tie(std::span<const double> row) {
  int best = 0;
  for (std::size_t c = 1; c < row.size(); ++c) {
    if (row[c] > row[best]) best = static_cast<int>(c);
  }
  return best;
}

}  // namespace detail

/// Bayes rule: each row goes to its maximum-posterior structure; ties break
/// to the lowest catalog index.
inline ClusterAssignment assign_bayes(const Matrix& posterior) {
  ClusterAssignment out;
  out.bayes_mode = true;
  out.structure_index.resize(posterior.rows());
  out.posterior_prob.resize(posterior.rows());
  for (std::size_t g = 0; g < posterior.rows(); ++g) {
    const int best = detail::argmax_lowest_tie(posterior.row(g));
    out.structure_index[g] = best;
    out.posterior_prob[g] = posterior(g, best);
  }
  return out;
}

/// Threshold rule: a row is assigned iff its best posterior reaches c.
/// (For c <= 0.5 several structures may qualify; the argmax among them is
/// the global argmax, so assignment stays unique.)
inline ClusterAssignment assign_threshold(const Matrix& posterior, double c) {
  if (!(c > 0.0 && c <= 1.0)) {
    throw ConfigError("threshold c must lie in (0,1]");
  }
  ClusterAssignment out = assign_bayes(posterior);
  out.bayes_mode = false;
  out.threshold = c;
  for (std::size_t g = 0; g < posterior.rows(); ++g) {
    if (out.posterior_prob[g] < c) {
      out.structure_index[g] = -1;
      out.posterior_prob[g] = 0.0;
    }
  }
  return out;
}

struct ClusterInfo {
  int structure_index;
  std::string structure_text;
  std::vector<int> members;
  double mean_posterior;
};

struct ClusterSummary {
  std::vector<ClusterInfo> clusters;  // nonempty, by catalog index
  std::size_t n_unassigned = 0;
};

inline ClusterSummary cluster_summary(
    const ClusterAssignment& assignment,
    const std::vector<OrderedStructure>& catalog) {
  std::map<int, ClusterInfo> by_index;
  ClusterSummary out;
  for (std::size_t g = 0; g < assignment.n_rows(); ++g) {
    const int idx = assignment.structure_index[g];
    if (idx < 0) {
      ++out.n_unassigned;
      continue;
    }
    auto& info = by_index[idx];
    if (info.members.empty()) {
      info.structure_index = idx;
      info.structure_text = catalog.at(idx).text();
      info.mean_posterior = 0.0;
    }
    info.members.push_back(static_cast<int>(g));
    info.mean_posterior += assignment.posterior_prob[g];
  }
  for (auto& [idx, info] : by_index) {
    info.mean_posterior /= static_cast<double>(info.members.size());
    out.clusters.push_back(std::move(info));
  }
  return out;
}

/// Hubert-Arabie adjusted Rand index between two full partitions given as
/// per-row labels.
inline double adjusted_rand_index(const std::vector<int>& a,
                                  const std::vector<int>& b) {
  if (a.size() != b.size()) {
    throw InputError("partitions cover different row sets");
  }
  if (a.empty()) throw InputError("cannot compare empty partitions");
  std::map<std::pair<int, int>, std::int64_t> joint;
  std::map<int, std::int64_t> count_a, count_b;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++joint[{a[i], b[i]}];
    ++count_a[a[i]];
    ++count_b[b[i]];
  }
  auto choose2 = [](std::int64_t n) {
    return 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  };
  double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [key, n] : joint) sum_joint += choose2(n);
  for (const auto& [key, n] : count_a) sum_a += choose2(n);
  for (const auto& [key, n] : count_b) sum_b += choose2(n);
  const double total = choose2(static_cast<std::int64_t>(a.size()));
  const double expected = sum_a * sum_b / total;
  const double maximum = 0.5 * (sum_a + sum_b);
  if (maximum == expected) return 1.0;  // both partitions trivial
  return (sum_joint - expected) / (maximum - expected);
}

inline double adjusted_rand_index(const ClusterAssignment& a,
                                  const ClusterAssignment& b) {
  if (!a.fully_assigned() || !b.fully_assigned()) {
    throw InputError("adjusted Rand index requires fully assigned rows");
  }
  return adjusted_rand_index(a.structure_index, b.structure_index);
}

}  // namespace gammarank
