#include <gtest/gtest.h>

#include <random>
#include <set>

#include "cordiet/fca.hpp"
#include "support.hpp"

using namespace cordiet;

namespace {

using Mask = unsigned;
using Matrix01 = std::vector<std::vector<int>>;

Matrix01 random_matrix(std::mt19937_64& rng, std::size_t g, std::size_t m) {
  Matrix01 mat(g, std::vector<int>(m));
  unsigned density = 1 + rng() % 3;
  for (auto& row : mat)
    for (auto& x : row) x = (rng() % 4) < density;
  return mat;
}

// Brute force over plain bit masks, independent of Bitset and CbO: an extent
// is closed when it equals the objects sharing all attributes common to it.
struct BruteLattice {
  std::vector<std::pair<Mask, Mask>> concepts;  // (extent, intent)
  std::set<std::pair<Mask, Mask>> covers;       // (lower extent, upper extent)
};

BruteLattice brute(const Matrix01& mat, std::size_t M) {
  std::size_t G = mat.size();
  auto intent_of = [&](Mask A) {
    Mask B = (1u << M) - 1;
    for (std::size_t g = 0; g < G; ++g)
      if (A >> g & 1)
        for (std::size_t m = 0; m < M; ++m)
          if (!mat[g][m]) B &= ~(1u << m);
    return B;
  };
  auto extent_of = [&](Mask B) {
    Mask A = 0;
    for (std::size_t g = 0; g < G; ++g) {
      bool all = true;
      for (std::size_t m = 0; m < M; ++m)
        if ((B >> m & 1) && !mat[g][m]) all = false;
      if (all) A |= 1u << g;
    }
    return A;
  };
  BruteLattice out;
  for (Mask A = 0; A < (1u << G); ++A)
    if (extent_of(intent_of(A)) == A) out.concepts.emplace_back(A, intent_of(A));
  for (auto [a, ai] : out.concepts)
    for (auto [b, bi] : out.concepts) {
      if (a == b || (a & b) != a) continue;
      bool between = false;
      for (auto [c, ci] : out.concepts)
        if (c != a && c != b && (a & c) == a && (c & b) == c) between = true;
      if (!between) out.covers.emplace(a, b);
    }
  return out;
}

Mask to_mask(const Bitset& b) {
  Mask m = 0;
  b.for_each([&](std::size_t i) { m |= 1u << i; });
  return m;
}

}  // namespace

TEST(ComputeConcepts, MatchesBruteForceOnRandomContexts) {
  std::mt19937_64 rng(20240601);
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t G = rng() % 9, M = rng() % 9;
    auto mat = random_matrix(rng, G, M);
    auto ctx = FormalContext::from_matrix(mat, M);
    auto expected = brute(mat, M);
    auto got = compute_concepts(ctx);
    std::set<std::pair<Mask, Mask>> a(expected.concepts.begin(), expected.concepts.end()), b;
    for (const auto& c : got) b.emplace(to_mask(c.extent), to_mask(c.intent));
    ASSERT_EQ(got.size(), b.size()) << "duplicates, trial " << trial;
    ASSERT_EQ(a, b) << "trial " << trial;
    for (std::size_t i = 1; i < got.size(); ++i) ASSERT_TRUE(lectic_less(got[i - 1].extent, got[i].extent));

    auto lat = build_lattice(ctx, got);
    std::set<std::pair<Mask, Mask>> covers;
    for (auto [lo, up] : lat.covering()) covers.emplace(to_mask(lat.concepts()[lo].extent), to_mask(lat.concepts()[up].extent));
    ASSERT_EQ(covers, expected.covers) << "trial " << trial;
  }
}

TEST(ComputeConcepts, LecticOrderIsSmallestDifferingElement) {
  Bitset a(4), b(4);
  a.set(1);
  b.set(0);
  EXPECT_TRUE(lectic_less(a, b));  // the first difference, 0, lies in b
  EXPECT_FALSE(lectic_less(b, a));
  EXPECT_FALSE(lectic_less(a, a));
}

TEST(Lattice, Contranominal3) {
  auto ctx = parse_context(fixtures::text("b3.cxt"));
  auto lat = build_lattice(ctx);
  EXPECT_EQ(lat.size(), 8u);
  EXPECT_EQ(lat.covering().size(), 12u);
  auto j = lattice_to_json(lat);
  EXPECT_EQ(j["layers"].size(), 4u);
  EXPECT_EQ(j["nodes"].size(), 8u);
  EXPECT_EQ(j["edges"].size(), 12u);
  EXPECT_EQ(lat.concepts()[lat.top()].extent.count(), 3u);
  EXPECT_EQ(lat.concepts()[lat.bottom()].extent.count(), 0u);
}

// Layers: longest path from the top, by relaxation over brute covers.
// Labels: object g sits at the concept with extent {g}'', attribute m at m'.
TEST(Lattice, LayersAndReducedLabelsMatchOracle) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    std::size_t G = 1 + rng() % 7, M = 1 + rng() % 7;
    auto mat = random_matrix(rng, G, M);
    auto ctx = FormalContext::from_matrix(mat, M);
    auto lat = build_lattice(ctx);
    std::vector<std::size_t> depth(lat.size(), 0);
    for (std::size_t round = 0; round < lat.size(); ++round)
      for (auto [lo, up] : lat.covering()) depth[lo] = std::max(depth[lo], depth[up] + 1);
    for (std::size_t i = 0; i < lat.size(); ++i) ASSERT_EQ(lat.layers()[i], depth[i]);
    ASSERT_EQ(lat.layers()[lat.top()], 0u);

    for (std::size_t g = 0; g < G; ++g) {
      Mask common = (1u << M) - 1;
      for (std::size_t m = 0; m < M; ++m)
        if (!mat[g][m]) common &= ~(1u << m);
      Mask ext = 0;
      for (std::size_t h = 0; h < G; ++h) {
        bool all = true;
        for (std::size_t m = 0; m < M; ++m)
          if ((common >> m & 1) && !mat[h][m]) all = false;
        if (all) ext |= 1u << h;
      }
      std::size_t c = lat.object_concept(g);
      ASSERT_EQ(to_mask(lat.concepts()[c].extent), ext);
      const auto& own = lat.own_objects()[c];
      ASSERT_TRUE(std::any_of(own.begin(), own.end(), [&](const LabelObject& o) { return o.object == g; }));
    }
    std::size_t labelled = 0;
    for (std::size_t i = 0; i < lat.size(); ++i) {
      labelled += lat.own_attributes()[i].size();
      for (const auto& a : lat.own_attributes()[i]) {
        auto m = ctx.attribute_index(a);
        ASSERT_TRUE(lat.concepts()[i].extent == ctx.column(m));
      }
    }
    ASSERT_EQ(labelled, M);
  }
}

TEST(Lattice, EdgeCases) {
  auto empty = FormalContext::from_matrix({}, 0);
  auto lat = build_lattice(empty);
  EXPECT_EQ(lat.size(), 1u);
  EXPECT_TRUE(lat.covering().empty());
  auto no_attrs = FormalContext::from_matrix({{}, {}}, 0);
  EXPECT_EQ(build_lattice(no_attrs).size(), 1u);
  auto full = FormalContext::from_matrix({{1, 1}, {1, 1}}, 2);
  EXPECT_EQ(build_lattice(full).size(), 1u);
  auto diag = FormalContext::from_matrix({{1, 0}, {0, 1}}, 2);
  EXPECT_EQ(build_lattice(diag).size(), 4u);
}

TEST(Lattice, InconsistentConceptListIsInternalError) {
  auto ctx = parse_context(fixtures::text("b3.cxt"));
  auto concepts = compute_concepts(ctx);
  concepts.erase(concepts.begin() + 3);
  EXPECT_THROW(build_lattice(ctx, concepts), InternalError);
  EXPECT_THROW(build_lattice(ctx, {}), InternalError);
}

TEST(ComputeConcepts, ResourceLimit) {
  auto ctx = parse_context(fixtures::text("b3.cxt"));
  EXPECT_THROW(compute_concepts(ctx, 7), ResourceError);
  EXPECT_EQ(compute_concepts(ctx, 8).size(), 8u);
}

TEST(Export, JsonCarriesUrlsAndDotIsBottomToTop) {
  auto c = fixtures::corpus("survey_corpus.xml");
  auto o = fixtures::ontology("survey_ontology.xml");
  auto ctx = build_context(c, {"KDD", "FCA", "ontology", "IR"}, o, build_index(c, all_sections()));
  auto lat = build_lattice(ctx);
  auto j = nlohmann::json::parse(export_lattice(lat, "json"));
  EXPECT_EQ(j["format"], "cordiet-lattice");
  std::size_t labelled = 0;
  for (const auto& n : j["nodes"])
    for (const auto& obj : n["ownObjects"]) {
      ++labelled;
      EXPECT_EQ(obj["url"], c.at(obj["id"].get<std::string>()).url);
    }
  EXPECT_EQ(labelled, 6u);
  auto dot = export_lattice(lat, "dot");
  EXPECT_NE(dot.find("rankdir=BT"), std::string::npos);
  EXPECT_EQ(export_lattice(lat, "json"), export_lattice(build_lattice(ctx), "json"));
  EXPECT_THROW(export_lattice(lat, "svg"), ConfigError);
}

TEST(Clarify, MergesEqualRowsAndColumns) {
  auto ctx = FormalContext::from_matrix({{1, 1, 0}, {1, 1, 0}, {0, 0, 1}}, 3);
  auto c = clarify(ctx);
  EXPECT_EQ(c.object_count(), 2u);
  EXPECT_EQ(c.attribute_count(), 2u);
  EXPECT_EQ(build_lattice(c).size(), build_lattice(ctx).size());
}
