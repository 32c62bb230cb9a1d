#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gammarank/errors.hpp"
#include "gammarank/matrix.hpp"

namespace gammarank {

/// Largest supported group count; the ordered-structure catalog grows as the
/// Fubini numbers (545,835 at p=8).
inline constexpr int max_groups = 8;

/// Sample-to-group design: group_of[i] in [0, n_groups) for each sample i.
/// Library sizes are carried only for count data.
class ExperimentLayout {
 public:
  ExperimentLayout(std::vector<int> group_of, int n_groups,
                   std::optional<std::vector<double>> library_sizes = {})
      : group_of_(std::move(group_of)),
        n_groups_(n_groups),
        library_sizes_(std::move(library_sizes)) {
    const int n = static_cast<int>(group_of_.size());
    if (n_groups_ <= 1 || n_groups_ > n) {
      throw InputError("layout requires 1 < p <= n (got p=" +
                       std::to_string(n_groups_) + ", n=" + std::to_string(n) +
                       ")");
    }
    std::vector<bool> seen(n_groups_, false);
    for (int g : group_of_) {
      if (g < 0 || g >= n_groups_) {
        throw InputError("group index out of range in layout");
      }
      seen[g] = true;
    }
    for (int j = 0; j < n_groups_; ++j) {
      if (!seen[j]) {
        throw InputError("group " + std::to_string(j + 1) +
                         " has no samples in layout");
      }
    }
    if (library_sizes_) {
      if (static_cast<int>(library_sizes_->size()) != n) {
        throw InputError("library sizes must match sample count");
      }
      for (double s : *library_sizes_) {
        if (!(s > 0.0)) throw InputError("library sizes must be positive");
      }
    }
  }

  int n_samples() const { return static_cast<int>(group_of_.size()); }
  int n_groups() const { return n_groups_; }
  const std::vector<int>& group_of() const { return group_of_; }
  const std::optional<std::vector<double>>& library_sizes() const {
    return library_sizes_;
  }

 private:
  std::vector<int> group_of_;
  int n_groups_;
  std::optional<std::vector<double>> library_sizes_;
};

/// Ordered partition of group labels. Block order is semantic: block k has
/// the k-th smallest latent mean. Blocks are stored as group bitmasks
/// (bit j = group j); canonical text writes 1-based labels, e.g. "(13)(2)".
class OrderedStructure {
 public:
  OrderedStructure(std::vector<std::uint16_t> block_masks, int n_groups)
      : masks_(std::move(block_masks)), n_groups_(n_groups) {
    validate();
  }

  static OrderedStructure from_blocks(
      const std::vector<std::vector<int>>& blocks, int n_groups) {
    std::vector<std::uint16_t> masks;
    masks.reserve(blocks.size());
    for (const auto& block : blocks) {
      std::uint16_t m = 0;
      for (int label : block) {
        if (label < 0 || label >= n_groups) {
          throw InputError("group label out of range in structure block");
        }
        m |= static_cast<std::uint16_t>(1u << label);
      }
      masks.push_back(m);
    }
    return OrderedStructure(std::move(masks), n_groups);
  }

  int n_blocks() const { return static_cast<int>(masks_.size()); }
  int n_groups() const { return n_groups_; }
  const std::vector<std::uint16_t>& block_masks() const { return masks_; }

  /// Group labels (0-based, sorted) of block k.
  std::vector<int> block(int k) const {
    std::vector<int> labels;
    for (int j = 0; j < n_groups_; ++j) {
      if (masks_[k] & (1u << j)) labels.push_back(j);
    }
    return labels;
  }

  /// Index of the block containing group j.
  int block_of_group(int j) const {
    for (int k = 0; k < n_blocks(); ++k) {
      if (masks_[k] & (1u << j)) return k;
    }
    throw InputError("group not covered by structure");
  }

  std::string text() const {
    std::string out;
    for (std::uint16_t m : masks_) {
      out += '(';
      for (int j = 0; j < n_groups_; ++j) {
        if (m & (1u << j)) out += static_cast<char>('1' + j);
      }
      out += ')';
    }
    return out;
  }

  /// The unordered parent: same blocks, order normalized to ascending
  /// smallest label (the many-to-one map of the catalog filter).
  OrderedStructure unordered_parent() const {
    std::vector<std::uint16_t> sorted = masks_;
    std::sort(sorted.begin(), sorted.end(),
              [](std::uint16_t a, std::uint16_t b) {
                return std::countr_zero(a) < std::countr_zero(b);
              });
    return OrderedStructure(std::move(sorted), n_groups_);
  }

  bool operator==(const OrderedStructure& other) const {
    return n_groups_ == other.n_groups_ && masks_ == other.masks_;
  }

 private:
  void validate() const {
    if (masks_.empty()) throw InputError("structure has no blocks");
    if (n_groups_ < 1 || n_groups_ > max_groups) {
      throw InputError("structure group count out of range");
    }
    std::uint32_t seen = 0;
    for (std::uint16_t m : masks_) {
      if (m == 0) throw InputError("structure has an empty block");
      if (seen & m) throw InputError("structure blocks overlap");
      seen |= m;
    }
    const std::uint32_t full = (1u << n_groups_) - 1;
    if (seen != full) {
      throw InputError("structure blocks do not cover all groups");
    }
  }

  std::vector<std::uint16_t> masks_;
  int n_groups_;
};

/// Samples grouped by structure block, in block order.
struct SampleBlocks {
  std::vector<std::vector<int>> sample_sets;  // 0-based sample indices
  std::vector<int> sizes;                     // n_k
};

/// Maps a structure onto a layout: block k collects every sample whose
/// group lies in the structure's k-th block.
inline SampleBlocks structure_blocks(const OrderedStructure& eta,
                                     const ExperimentLayout& layout) {
  if (eta.n_groups() != layout.n_groups()) {
    throw InputError("structure is over " + std::to_string(eta.n_groups()) +
                     " groups but layout has " +
                     std::to_string(layout.n_groups()));
  }
  SampleBlocks out;
  out.sample_sets.resize(eta.n_blocks());
  out.sizes.assign(eta.n_blocks(), 0);
  const auto& groups = layout.group_of();
  for (int i = 0; i < layout.n_samples(); ++i) {
    const int k = eta.block_of_group(groups[i]);
    out.sample_sets[k].push_back(i);
    ++out.sizes[k];
  }
  return out;
}

namespace detail {

// Emits every set partition of {0..p-1} as block masks ordered by smallest
// element (restricted-growth-string order).
template <typename Fn>
void for_each_set_partition(int p, Fn&& fn) {
  std::vector<int> assign(p, 0);
  std::vector<std::uint16_t> masks;
  auto emit = [&] {
    int k = 1 + *std::max_element(assign.begin(), assign.end());
    masks.assign(k, 0);
    for (int i = 0; i < p; ++i) {
      masks[assign[i]] |= static_cast<std::uint16_t>(1u << i);
    }
    fn(masks);
  };
  // Iterate restricted growth strings: assign[0]=0, assign[i] <= max+1.
  for (;;) {
    emit();
    int i = p - 1;
    for (; i > 0; --i) {
      int cap = 0;
      for (int j = 0; j < i; ++j) cap = std::max(cap, assign[j]);
      if (assign[i] <= cap) break;
    }
    if (i == 0) return;
    ++assign[i];
    std::fill(assign.begin() + i + 1, assign.end(), 0);
  }
}

}  // namespace detail

/// All ordered set partitions of {1..p}, sorted by block count then by
/// canonical text, so catalog indices are stable across runs and platforms.
inline std::vector<OrderedStructure> enumerate_ordered_structures(int p) {
  if (p < 1 || p > max_groups) {
    throw ConfigError("catalog too large / invalid p (need 1 <= p <= " +
                      std::to_string(max_groups) + ")");
  }
  std::vector<OrderedStructure> catalog;
  detail::for_each_set_partition(
      p, [&](const std::vector<std::uint16_t>& base) {
        std::vector<std::uint16_t> masks = base;
        std::sort(masks.begin(), masks.end());
        do {
          catalog.emplace_back(masks, p);
        } while (std::next_permutation(masks.begin(), masks.end()));
      });
  std::vector<std::pair<std::string, std::size_t>> keys;
  keys.reserve(catalog.size());
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    keys.emplace_back(catalog[i].text(), i);
  }
  std::sort(keys.begin(), keys.end(), [&](const auto& a, const auto& b) {
    int ka = catalog[a.second].n_blocks();
    int kb = catalog[b.second].n_blocks();
    if (ka != kb) return ka < kb;
    return a.first < b.first;
  });
  std::vector<OrderedStructure> sorted;
  sorted.reserve(catalog.size());
  for (const auto& [text, idx] : keys) sorted.push_back(catalog[idx]);
  return sorted;
}

/// All unordered set partitions of {1..p} (block order normalized to
/// ascending smallest label), same K-then-text ordering.
inline std::vector<OrderedStructure> enumerate_unordered_partitions(int p) {
  if (p < 1 || p > max_groups) {
    throw ConfigError("catalog too large / invalid p (need 1 <= p <= " +
                      std::to_string(max_groups) + ")");
  }
  std::vector<OrderedStructure> parts;
  detail::for_each_set_partition(
      p, [&](const std::vector<std::uint16_t>& masks) {
        parts.emplace_back(masks, p);
      });
  std::sort(parts.begin(), parts.end(),
            [](const OrderedStructure& a, const OrderedStructure& b) {
              if (a.n_blocks() != b.n_blocks()) {
                return a.n_blocks() < b.n_blocks();
              }
              return a.text() < b.text();
            });
  return parts;
}

/// Drops the single-block null structure (used when clustering pre-selected
/// non-null rows).
inline std::vector<OrderedStructure> without_null(
    std::vector<OrderedStructure> catalog) {
  std::erase_if(catalog,
                [](const OrderedStructure& s) { return s.n_blocks() == 1; });
  return catalog;
}

/// Parses the canonical text form, e.g. "(13)(2)" with p=3. Reports the
/// 0-based character position on malformed input.
inline OrderedStructure parse_structure(const std::string& text, int p) {
  if (p < 1 || p > max_groups) {
    throw InputError("invalid group count for structure parse");
  }
  auto fail = [&](std::size_t pos, const std::string& what) -> void {
    throw InputError("structure parse error at position " +
                     std::to_string(pos) + ": " + what);
  };
  std::vector<std::uint16_t> masks;
  std::uint32_t seen = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '(') fail(i, "expected '('");
    ++i;
    std::uint16_t mask = 0;
    while (i < text.size() && text[i] != ')') {
      char c = text[i];
      if (c < '1' || c > '8') fail(i, "expected group label or ')'");
      int label = c - '1';
      if (label >= p) fail(i, std::string("label ") + c + " exceeds p");
      if (seen & (1u << label)) {
        fail(i, std::string("label ") + c + " repeated");
      }
      seen |= 1u << label;
      mask |= static_cast<std::uint16_t>(1u << label);
      ++i;
    }
    if (i == text.size()) fail(i, "unterminated block");
    if (mask == 0) fail(i, "empty block");
    masks.push_back(mask);
    ++i;  // consume ')'
  }
  if (masks.empty()) fail(0, "empty structure");
  if (seen != (1u << p) - 1) fail(text.size(), "missing group labels");
  return OrderedStructure(std::move(masks), p);
}

struct FilteredCatalog {
  std::vector<OrderedStructure> kept;
  std::vector<std::size_t> kept_indices;  // positions in the input catalog
};

/// Catalog reduction for large p: an ordered structure survives iff some
/// row carries posterior mass above `threshold` on its unordered parent.
inline FilteredCatalog filter_catalog(
    const std::vector<OrderedStructure>& catalog,
    const std::vector<OrderedStructure>& unordered_catalog,
    const Matrix& unordered_posteriors, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("filter threshold must be in (0,1)");
  }
  if (unordered_posteriors.cols() != unordered_catalog.size()) {
    throw InputError("posterior matrix does not match unordered catalog");
  }
  std::unordered_map<std::string, std::size_t> parent_index;
  for (std::size_t u = 0; u < unordered_catalog.size(); ++u) {
    parent_index.emplace(unordered_catalog[u].text(), u);
  }
  std::vector<bool> keep_parent(unordered_catalog.size(), false);
  for (std::size_t g = 0; g < unordered_posteriors.rows(); ++g) {
    for (std::size_t u = 0; u < unordered_catalog.size(); ++u) {
      if (unordered_posteriors(g, u) > threshold) keep_parent[u] = true;
    }
  }
  FilteredCatalog out;
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    auto it = parent_index.find(catalog[i].unordered_parent().text());
    if (it == parent_index.end()) {
      throw InputError("catalog structure has no unordered parent entry: " +
                       catalog[i].text());
    }
    if (keep_parent[it->second]) {
      out.kept.push_back(catalog[i]);
      out.kept_indices.push_back(i);
    }
  }
  return out;
}

}  // namespace gammarank
