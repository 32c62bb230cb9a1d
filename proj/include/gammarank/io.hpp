#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gammarank/cluster.hpp"
#include "gammarank/em.hpp"
#include "gammarank/errors.hpp"
#include "gammarank/matrix.hpp"
#include "gammarank/model.hpp"
#include "gammarank/structures.hpp"

namespace gammarank {

/// Shortest-17-significant-digit form: round-trips doubles exactly.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line,
                                             char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') {
    out.back().pop_back();
  }
  return out;
}

inline double parse_double(const std::string& field, const std::string& where) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    throw InputError(where + ": invalid number '" + field + "'");
  }
  return value;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open input file: " + path);
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open output file for writing: " + path);
  return out;
}

}  // namespace detail

/// Expression matrix with row and sample identifiers.
struct DataMatrix {
  std::vector<std::string> row_ids;
  std::vector<std::string> sample_ids;
  Matrix values;
};

struct ReadOptions {
  char delimiter = '\t';
  std::optional<double> floor_eps;  // gamma mode: clamp values below eps
};

/// Reads a rectangular matrix: header row of sample ids, first column of
/// row ids. Gamma mode rejects nonpositive entries unless floored; count
/// mode rejects non-integers. Errors carry 1-based line numbers.
inline DataMatrix read_matrix(const std::string& path, DataMode mode,
                              const ReadOptions& options = {}) {
  auto in = detail::open_input(path);
  DataMatrix out;
  std::string line;
  if (!std::getline(in, line)) throw InputError(path + ": empty file");
  auto header = detail::split_fields(line, options.delimiter);
  if (header.size() < 2) {
    throw InputError(path + ":1: header needs a row-id column and at least "
                     "one sample column");
  }
  out.sample_ids.assign(header.begin() + 1, header.end());
  std::unordered_set<std::string> seen_samples;
  for (const auto& id : out.sample_ids) {
    if (!seen_samples.insert(id).second) {
      throw InputError(path + ":1: duplicate sample id '" + id + "'");
    }
  }

  const std::size_t n = out.sample_ids.size();
  std::vector<double> values;
  std::unordered_set<std::string> seen_rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = detail::split_fields(line, options.delimiter);
    const std::string where = path + ":" + std::to_string(line_no);
    if (fields.size() != n + 1) {
      throw InputError(where + ": expected " + std::to_string(n + 1) +
                       " fields, got " + std::to_string(fields.size()));
    }
    if (!seen_rows.insert(fields[0]).second) {
      throw InputError(where + ": duplicate row id '" + fields[0] + "'");
    }
    out.row_ids.push_back(fields[0]);
    for (std::size_t i = 0; i < n; ++i) {
      double v = detail::parse_double(fields[i + 1], where);
      if (mode == DataMode::gamma) {
        if (options.floor_eps && v < *options.floor_eps) {
          v = *options.floor_eps;
        }
        if (!(v > 0.0)) {
          throw InputError(where + ": nonpositive value in gamma mode at "
                           "column '" + out.sample_ids[i] +
                           "' (use --floor to clamp)");
        }
      } else {
        if (v < 0.0 || v != std::floor(v)) {
          throw InputError(where + ": count mode needs nonnegative integers "
                           "at column '" + out.sample_ids[i] + "'");
        }
      }
      values.push_back(v);
    }
  }
  if (out.row_ids.empty()) throw InputError(path + ": no data rows");
  out.values = Matrix(out.row_ids.size(), n);
  for (std::size_t g = 0; g < out.row_ids.size(); ++g) {
    for (std::size_t i = 0; i < n; ++i) {
      out.values(g, i) = values[g * n + i];
    }
  }
  return out;
}

inline void write_matrix(const std::string& path, const DataMatrix& matrix,
                         char delimiter = '\t') {
  auto out = detail::open_output(path);
  out << "row_id";
  for (const auto& id : matrix.sample_ids) out << delimiter << id;
  out << '\n';
  for (std::size_t g = 0; g < matrix.row_ids.size(); ++g) {
    out << matrix.row_ids[g];
    for (std::size_t i = 0; i < matrix.sample_ids.size(); ++i) {
      out << delimiter << format_double(matrix.values(g, i));
    }
    out << '\n';
  }
}

/// Layout file contents before binding to a matrix: sample id, group name,
/// optional library size per line.
struct LayoutTable {
  std::vector<std::string> sample_ids;
  std::vector<std::string> group_names;
  std::optional<std::vector<double>> library_sizes;
};

inline LayoutTable read_layout(const std::string& path, char delimiter = '\t') {
  auto in = detail::open_input(path);
  LayoutTable table;
  std::string line;
  std::size_t line_no = 0;
  std::unordered_set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = detail::split_fields(line, delimiter);
    const std::string where = path + ":" + std::to_string(line_no);
    if (line_no == 1 && fields.size() >= 2 && fields[0] == "sample_id") {
      continue;  // optional header
    }
    if (fields.size() != 2 && fields.size() != 3) {
      throw InputError(where + ": expected 'sample group [library_size]'");
    }
    if (fields[1].empty()) throw InputError(where + ": empty group label");
    if (!seen.insert(fields[0]).second) {
      throw InputError(where + ": duplicate sample id '" + fields[0] + "'");
    }
    table.sample_ids.push_back(fields[0]);
    table.group_names.push_back(fields[1]);
    if (fields.size() == 3) {
      if (!table.library_sizes) {
        if (table.sample_ids.size() != 1) {
          throw InputError(where + ": library sizes must be given for every "
                           "sample or none");
        }
        table.library_sizes.emplace();
      }
      table.library_sizes->push_back(
          detail::parse_double(fields[2], where));
    } else if (table.library_sizes) {
      throw InputError(where + ": missing library size");
    }
  }
  if (table.sample_ids.empty()) throw InputError(path + ": empty layout");
  return table;
}

/// Layout bound to a matrix column order, with the group-name map that makes
/// structure texts interpretable.
struct BoundLayout {
  ExperimentLayout layout;
  std::vector<std::string> group_names;  // index j -> name of group j+1
};

/// Binds a layout table to matrix columns. Groups are relabeled 1..p by
/// first appearance in the layout file.
inline BoundLayout bind_layout(const LayoutTable& table,
                               const std::vector<std::string>& sample_ids) {
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t r = 0; r < table.sample_ids.size(); ++r) {
    position.emplace(table.sample_ids[r], r);
  }
  std::vector<std::string> group_names;
  std::unordered_map<std::string, int> group_index;
  for (const auto& name : table.group_names) {
    if (group_index.emplace(name, static_cast<int>(group_names.size()))
            .second) {
      group_names.push_back(name);
    }
  }
  std::vector<int> group_of(sample_ids.size());
  std::optional<std::vector<double>> lib_sizes;
  if (table.library_sizes) lib_sizes.emplace(sample_ids.size());
  for (std::size_t i = 0; i < sample_ids.size(); ++i) {
    auto it = position.find(sample_ids[i]);
    if (it == position.end()) {
      throw InputError("sample '" + sample_ids[i] +
                       "' from the matrix is missing from the layout");
    }
    group_of[i] = group_index.at(table.group_names[it->second]);
    if (lib_sizes) (*lib_sizes)[i] = (*table.library_sizes)[it->second];
  }
  if (position.size() != sample_ids.size()) {
    for (const auto& id : table.sample_ids) {
      if (std::find(sample_ids.begin(), sample_ids.end(), id) ==
          sample_ids.end()) {
        throw InputError("sample '" + id +
                         "' from the layout is missing from the matrix");
      }
    }
  }
  return {ExperimentLayout(std::move(group_of),
                           static_cast<int>(group_names.size()),
                           std::move(lib_sizes)),
          std::move(group_names)};
}

inline void write_weights(const std::string& path,
                          const std::vector<OrderedStructure>& catalog,
                          const std::vector<double>& weights) {
  auto out = detail::open_output(path);
  out << "structure\tweight\n";
  for (std::size_t c = 0; c < catalog.size(); ++c) {
    out << catalog[c].text() << '\t' << format_double(weights[c]) << '\n';
  }
}

inline void write_loglik_trace(const std::string& path,
                               const std::vector<double>& trace) {
  auto out = detail::open_output(path);
  out << "iteration\tloglik\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out << (i + 1) << '\t' << format_double(trace[i]) << '\n';
  }
}

inline void write_posterior(const std::string& path,
                            const std::vector<std::string>& row_ids,
                            const std::vector<OrderedStructure>& catalog,
                            const Matrix& posterior) {
  auto out = detail::open_output(path);
  out << "row_id";
  for (const auto& eta : catalog) out << '\t' << eta.text();
  out << '\n';
  for (std::size_t g = 0; g < row_ids.size(); ++g) {
    out << row_ids[g];
    for (std::size_t c = 0; c < catalog.size(); ++c) {
      out << '\t' << format_double(posterior(g, c));
    }
    out << '\n';
  }
}

struct PosteriorFile {
  std::vector<std::string> row_ids;
  std::vector<std::string> structure_texts;
  Matrix posterior;
};

inline PosteriorFile read_posterior(const std::string& path) {
  auto in = detail::open_input(path);
  PosteriorFile out;
  std::string line;
  if (!std::getline(in, line)) throw InputError(path + ": empty file");
  auto header = detail::split_fields(line, '\t');
  if (header.size() < 2) throw InputError(path + ":1: malformed header");
  out.structure_texts.assign(header.begin() + 1, header.end());
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = detail::split_fields(line, '\t');
    const std::string where = path + ":" + std::to_string(line_no);
    if (fields.size() != header.size()) {
      throw InputError(where + ": ragged row");
    }
    out.row_ids.push_back(fields[0]);
    for (std::size_t c = 1; c < fields.size(); ++c) {
      values.push_back(detail::parse_double(fields[c], where));
    }
  }
  const std::size_t C = out.structure_texts.size();
  out.posterior = Matrix(out.row_ids.size(), C);
  for (std::size_t g = 0; g < out.row_ids.size(); ++g) {
    for (std::size_t c = 0; c < C; ++c) {
      out.posterior(g, c) = values[g * C + c];
    }
  }
  return out;
}

inline constexpr const char* unassigned_label = "UNASSIGNED";

inline void write_assignments(const std::string& path,
                              const std::vector<std::string>& row_ids,
                              const std::vector<OrderedStructure>& catalog,
                              const ClusterAssignment& assignment) {
  auto out = detail::open_output(path);
  out << "row_id\tstructure\tposterior\tcluster\n";
  for (std::size_t g = 0; g < row_ids.size(); ++g) {
    const int idx = assignment.structure_index[g];
    out << row_ids[g] << '\t'
        << (idx < 0 ? unassigned_label : catalog[idx].text()) << '\t'
        << format_double(assignment.posterior_prob[g]) << '\t'
        << (idx < 0 ? unassigned_label : std::to_string(idx)) << '\n';
  }
}

struct AssignmentFile {
  std::vector<std::string> row_ids;
  std::vector<std::string> cluster_labels;
};

inline AssignmentFile read_assignments(const std::string& path) {
  auto in = detail::open_input(path);
  AssignmentFile out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = detail::split_fields(line, '\t');
    if (line_no == 1 && !fields.empty() && fields[0] == "row_id") continue;
    if (fields.size() < 2) {
      throw InputError(path + ":" + std::to_string(line_no) +
                       ": expected at least 'row_id<TAB>...<TAB>cluster'");
    }
    out.row_ids.push_back(fields[0]);
    out.cluster_labels.push_back(fields.back());
  }
  if (out.row_ids.empty()) throw InputError(path + ": no assignments");
  return out;
}

/// Per-row standardized group-mean profiles grouped by cluster: replicate
/// measurements are averaged within each group, then centered and scaled
/// across groups (the data behind the usual cluster trace display).
inline void write_profiles(const std::string& path, const DataMatrix& data,
                           const ExperimentLayout& layout,
                           const std::vector<OrderedStructure>& catalog,
                           const ClusterAssignment& assignment,
                           const std::vector<std::string>& group_names) {
  auto out = detail::open_output(path);
  const int p = layout.n_groups();
  out << "cluster\tstructure\trow_id";
  for (int j = 0; j < p; ++j) out << '\t' << group_names[j];
  out << '\n';
  std::vector<std::vector<int>> replicates(p);
  for (int i = 0; i < layout.n_samples(); ++i) {
    replicates[layout.group_of()[i]].push_back(i);
  }
  for (std::size_t g = 0; g < data.row_ids.size(); ++g) {
    const int idx = assignment.structure_index[g];
    std::vector<double> means(p, 0.0);
    for (int j = 0; j < p; ++j) {
      for (int i : replicates[j]) means[j] += data.values(g, i);
      means[j] /= static_cast<double>(replicates[j].size());
    }
    double center = 0.0;
    for (double m : means) center += m;
    center /= p;
    double ss = 0.0;
    for (double m : means) ss += (m - center) * (m - center);
    const double scale = p > 1 ? std::sqrt(ss / (p - 1)) : 0.0;
    out << (idx < 0 ? unassigned_label : std::to_string(idx)) << '\t'
        << (idx < 0 ? unassigned_label : catalog[idx].text()) << '\t'
        << data.row_ids[g];
    for (int j = 0; j < p; ++j) {
      const double z = scale > 0.0 ? (means[j] - center) / scale : 0.0;
      out << '\t' << format_double(z);
    }
    out << '\n';
  }
}

inline void write_layout(const std::string& path,
                         const std::vector<std::string>& sample_ids,
                         const std::vector<std::string>& group_names,
                         const ExperimentLayout& layout) {
  auto out = detail::open_output(path);
  for (int i = 0; i < layout.n_samples(); ++i) {
    out << sample_ids[i] << '\t' << group_names[layout.group_of()[i]];
    if (layout.library_sizes()) {
      out << '\t' << format_double((*layout.library_sizes())[i]);
    }
    out << '\n';
  }
}

}  // namespace gammarank
