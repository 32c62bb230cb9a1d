#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>
#include <gammarank/structures.hpp>

#include "support.hpp"

using namespace gammarank;

TEST_CASE("catalog counts match the Fubini numbers", "[structures]") {
  // independent oracle: sum_k k! * S(p,k) by Stirling recurrence
  const std::vector<std::uint64_t> expected = {1, 3, 13, 75, 541, 4683};
  for (int p = 1; p <= 6; ++p) {
    const auto catalog = enumerate_ordered_structures(p);
    CHECK(catalog.size() == expected[p - 1]);
    CHECK(catalog.size() == testsupport::fubini(p));
  }
}

TEST_CASE("large catalogs stay within the cap", "[structures][slow]") {
  CHECK(enumerate_ordered_structures(7).size() == testsupport::fubini(7));
  CHECK(enumerate_ordered_structures(8).size() == 545835);
  CHECK_THROWS_AS(enumerate_ordered_structures(9), ConfigError);
  CHECK_THROWS_AS(enumerate_ordered_structures(0), ConfigError);
}

TEST_CASE("p=2 catalog is the three two-group structures", "[structures]") {
  const auto catalog = enumerate_ordered_structures(2);
  REQUIRE(catalog.size() == 3);
  CHECK(catalog[0].text() == "(12)");
  CHECK(catalog[1].text() == "(1)(2)");
  CHECK(catalog[2].text() == "(2)(1)");
}

TEST_CASE("p=3 catalog matches the published thirteen structures",
          "[structures]") {
  const auto catalog = enumerate_ordered_structures(3);
  std::set<std::string> got;
  for (const auto& eta : catalog) got.insert(eta.text());
  const std::set<std::string> expected = {
      "(123)",    "(12)(3)",  "(3)(12)",  "(13)(2)",   "(2)(13)",
      "(1)(23)",  "(23)(1)",  "(1)(2)(3)", "(2)(1)(3)", "(1)(3)(2)",
      "(2)(3)(1)", "(3)(1)(2)", "(3)(2)(1)"};
  CHECK(got == expected);
}

TEST_CASE("enumeration order is deterministic: K ascending then text",
          "[structures]") {
  const auto catalog = enumerate_ordered_structures(4);
  for (std::size_t i = 1; i < catalog.size(); ++i) {
    const int ka = catalog[i - 1].n_blocks();
    const int kb = catalog[i].n_blocks();
    CHECK(ka <= kb);
    if (ka == kb) CHECK(catalog[i - 1].text() < catalog[i].text());
  }
}

TEST_CASE("structure blocks map onto the worked layout example",
          "[structures]") {
  // l = (1,1,2,2,3,3), eta = (13)(2): sigma_1 = {1,2,5,6}, sigma_2 = {3,4}
  const ExperimentLayout layout({0, 0, 1, 1, 2, 2}, 3);
  const auto eta = parse_structure("(13)(2)", 3);
  const auto blocks = structure_blocks(eta, layout);
  REQUIRE(blocks.sample_sets.size() == 2);
  CHECK(blocks.sample_sets[0] == std::vector<int>{0, 1, 4, 5});
  CHECK(blocks.sample_sets[1] == std::vector<int>{2, 3});
  CHECK(blocks.sizes == std::vector<int>{4, 2});
}

TEST_CASE("null structure pools all samples", "[structures]") {
  const ExperimentLayout layout({0, 0, 1, 1, 2, 2}, 3);
  const auto blocks = structure_blocks(parse_structure("(123)", 3), layout);
  REQUIRE(blocks.sample_sets.size() == 1);
  CHECK(blocks.sizes[0] == 6);
}

TEST_CASE("full differential expression recovers the replicate sets",
          "[structures]") {
  const ExperimentLayout layout({0, 0, 1, 1, 2, 2}, 3);
  const auto blocks =
      structure_blocks(parse_structure("(1)(2)(3)", 3), layout);
  CHECK(blocks.sample_sets[0] == std::vector<int>{0, 1});
  CHECK(blocks.sample_sets[1] == std::vector<int>{2, 3});
  CHECK(blocks.sample_sets[2] == std::vector<int>{4, 5});
}

TEST_CASE("block sizes always partition the samples", "[structures]") {
  const ExperimentLayout layout({0, 1, 1, 2, 2, 2, 3}, 4);
  for (const auto& eta : enumerate_ordered_structures(4)) {
    const auto blocks = structure_blocks(eta, layout);
    int total = 0;
    std::set<int> seen;
    for (std::size_t k = 0; k < blocks.sample_sets.size(); ++k) {
      total += blocks.sizes[k];
      seen.insert(blocks.sample_sets[k].begin(),
                  blocks.sample_sets[k].end());
    }
    CHECK(total == layout.n_samples());
    CHECK(seen.size() == static_cast<std::size_t>(layout.n_samples()));
  }
}

TEST_CASE("group-count mismatch is rejected", "[structures]") {
  const ExperimentLayout layout({0, 0, 1, 1}, 2);
  CHECK_THROWS_AS(structure_blocks(parse_structure("(13)(2)", 3), layout),
                  InputError);
}

TEST_CASE("parse round-trips the whole catalog", "[structures]") {
  for (int p : {2, 3, 4}) {
    for (const auto& eta : enumerate_ordered_structures(p)) {
      CHECK(parse_structure(eta.text(), p) == eta);
    }
  }
}

TEST_CASE("parse reads canonical text", "[structures]") {
  const auto eta = parse_structure("(13)(2)", 3);
  CHECK(eta.block(0) == std::vector<int>{0, 2});
  CHECK(eta.block(1) == std::vector<int>{1});
  const auto swapped = parse_structure("(2)(1)", 2);
  CHECK(swapped.block(0) == std::vector<int>{1});
  CHECK(swapped.block(1) == std::vector<int>{0});
}

TEST_CASE("parse rejects malformed text with a position", "[structures]") {
  CHECK_THROWS_WITH(parse_structure("(12)(2)", 2),
                    Catch::Matchers::ContainsSubstring("position 5"));
  CHECK_THROWS_AS(parse_structure("(12", 2), InputError);
  CHECK_THROWS_AS(parse_structure("(1)", 2), InputError);     // missing 2
  CHECK_THROWS_AS(parse_structure("(13)(2)", 2), InputError); // 3 > p
  CHECK_THROWS_AS(parse_structure("1)(2)", 2), InputError);
  CHECK_THROWS_AS(parse_structure("()(12)", 2), InputError);
  CHECK_THROWS_AS(parse_structure("", 2), InputError);
}

TEST_CASE("ordered catalog maps K!-to-1 onto unordered partitions",
          "[structures]") {
  for (int p : {3, 4, 5}) {
    const auto catalog = enumerate_ordered_structures(p);
    const auto unordered = enumerate_unordered_partitions(p);
    std::map<std::string, int> counts;
    for (const auto& eta : catalog) {
      ++counts[eta.unordered_parent().text()];
    }
    CHECK(counts.size() == unordered.size());
    for (const auto& part : unordered) {
      std::uint64_t fact = 1;
      for (int k = 2; k <= part.n_blocks(); ++k) fact *= k;
      CHECK(counts.at(part.text()) == static_cast<int>(fact));
    }
  }
}

TEST_CASE("unordered partition counts are the Bell numbers", "[structures]") {
  const std::vector<std::size_t> bell = {1, 2, 5, 15, 52, 203};
  for (int p = 1; p <= 6; ++p) {
    CHECK(enumerate_unordered_partitions(p).size() == bell[p - 1]);
  }
}

TEST_CASE("catalog filter keeps orderings of surviving parents",
          "[structures]") {
  const auto catalog = enumerate_ordered_structures(3);
  const auto unordered = enumerate_unordered_partitions(3);

  SECTION("no row exceeds the threshold on a parent: its orderings vanish") {
    Matrix post(4, unordered.size(), 0.0);
    // all mass on the null parent
    for (std::size_t g = 0; g < 4; ++g) post(g, 0) = 1.0;
    const auto filtered = filter_catalog(catalog, unordered, post, 0.5);
    REQUIRE(filtered.kept.size() == 1);
    CHECK(filtered.kept[0].text() == "(123)");
  }

  SECTION("all parents exceeded: catalog unchanged") {
    Matrix post(unordered.size(), unordered.size(), 0.0);
    for (std::size_t u = 0; u < unordered.size(); ++u) post(u, u) = 0.9;
    const auto filtered = filter_catalog(catalog, unordered, post, 0.5);
    CHECK(filtered.kept.size() == catalog.size());
  }

  SECTION("retaining one two-block parent keeps exactly its two orderings") {
    Matrix post(1, unordered.size(), 0.0);
    std::size_t target = 0;
    for (std::size_t u = 0; u < unordered.size(); ++u) {
      if (unordered[u].text() == "(12)(3)") target = u;
    }
    post(0, target) = 0.8;
    const auto filtered = filter_catalog(catalog, unordered, post, 0.5);
    std::set<std::string> kept;
    for (const auto& eta : filtered.kept) kept.insert(eta.text());
    CHECK(kept == std::set<std::string>{"(12)(3)", "(3)(12)"});
  }

  SECTION("threshold is strict") {
    Matrix post(1, unordered.size(), 0.0);
    post(0, 0) = 0.5;
    const auto filtered = filter_catalog(catalog, unordered, post, 0.5);
    CHECK(filtered.kept.empty());
  }

  SECTION("threshold outside (0,1) rejected") {
    Matrix post(1, unordered.size(), 0.0);
    CHECK_THROWS_AS(filter_catalog(catalog, unordered, post, 1.0),
                    ConfigError);
  }
}

TEST_CASE("layout invariants are enforced", "[structures]") {
  CHECK_THROWS_AS(ExperimentLayout({0, 0, 0}, 1), InputError);  // p = 1
  CHECK_THROWS_AS(ExperimentLayout({0, 1}, 3), InputError);     // empty group
  CHECK_THROWS_AS(ExperimentLayout({0, 2}, 2), InputError);     // bad index
  CHECK_THROWS_AS(
      ExperimentLayout({0, 1}, 2, std::vector<double>{1.0}), InputError);
  CHECK_THROWS_AS(
      ExperimentLayout({0, 1}, 2, std::vector<double>{1.0, 0.0}), InputError);
}

TEST_CASE("without_null drops exactly the single-block structure",
          "[structures]") {
  const auto catalog = without_null(enumerate_ordered_structures(5));
  CHECK(catalog.size() == 540);
  for (const auto& eta : catalog) CHECK(eta.n_blocks() > 1);
}
