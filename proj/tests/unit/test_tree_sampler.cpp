#include <doctest.h>

#include <cmath>

#include "../support/oracles.hpp"
#include "unea/tree_sampler.hpp"

using namespace unea;

namespace {

UnitRelationVector unit(std::vector<double> v) { return UnitRelationVector::from(v); }

}  // namespace

TEST_CASE("sampling logit with zero embeddings is zero") {
  const std::vector<double> z(3, 0.0);
  CHECK(sampling_logit(z, z, z, unit({1, 2, 3}), unit({0, 1, 0}), 4) == 0.0);
}

TEST_CASE("sampling logit with diagonal reflections") {
  const std::vector<double> root{1, 0}, parent{0, 1}, cand{1, 0};
  const double v = sampling_logit(root, parent, cand, unit({0, 1}), unit({0, 1}), 1);
  CHECK(v == doctest::Approx(1.0 / std::log(2.0)));
  CHECK(v == doctest::Approx(1.4427).epsilon(1e-4));
}

TEST_CASE("sampling logit matches the explicit-matrix oracle") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto root = oracle::random_vec(5, rng), parent = oracle::random_vec(5, rng), cand = oracle::random_vec(5, rng);
    const auto rp = oracle::random_vec(5, rng), rk = oracle::random_vec(5, rng);
    const std::size_t deg = 1 + static_cast<std::size_t>(trial % 7);
    const double bilinear = root.dot(oracle::reflection(rp) * cand) + parent.dot(oracle::reflection(rk) * cand);
    const double expect = oracle::leaky(bilinear, 0.01) / std::log(1.0 + static_cast<double>(deg));
    const double got = sampling_logit(oracle::std_vec(root), oracle::std_vec(parent), oracle::std_vec(cand),
                                      unit(oracle::std_vec(rp)), unit(oracle::std_vec(rk)), deg);
    CHECK(got == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("zero candidate degree is rejected") {
  const std::vector<double> e{1, 0};
  CHECK_THROWS_AS(sampling_logit(e, e, e, unit({1, 0}), unit({1, 0}), 0), std::invalid_argument);
}

TEST_CASE("child distribution is the softmax of oracle logits, parent excluded") {
  // star around 0 plus a back edge; expanding node 1 with parent 0
  const KnowledgeGraph kg(5, 2, {{0, 0, 1}, {1, 1, 2}, {3, 0, 1}, {1, 0, 4}, {2, 1, 4}});
  std::mt19937_64 rng(2);
  const Matrix ent = Matrix::Random(5, 4);
  const Matrix rel = Matrix::Random(4, 4);
  const SamplerTables frozen(ent, rel);
  const auto r_path = unit({rel(0, 0), rel(0, 1), rel(0, 2), rel(0, 3)});  // edge 0 -> 1 has relation 0
  const auto dist = child_distribution(kg, 0, 1, EntityId{0}, r_path, frozen, SamplerOptions{});
  REQUIRE(dist.size() == 3);  // 2, 3 (inverse), 4; never back to 0
  std::vector<double> logits;
  for (const auto& c : dist) {
    CHECK(c.edge.neighbor != 0);
    const oracle::Vec rk = rel.row(c.edge.relation).transpose();
    const oracle::Vec rp_raw = rel.row(0).transpose().normalized().cwiseProduct(rk.normalized());
    const oracle::Vec e0 = ent.row(0).transpose(), e1 = ent.row(1).transpose(), ec = ent.row(c.edge.neighbor).transpose();
    const double bilinear = e0.dot(oracle::reflection(rp_raw) * ec) + e1.dot(oracle::reflection(rk) * ec);
    logits.push_back(oracle::leaky(bilinear, 0.01) / std::log(1.0 + static_cast<double>(kg.degree(c.edge.neighbor))));
  }
  double z = 0;
  for (const double l : logits) z += std::exp(l);
  for (std::size_t i = 0; i < dist.size(); ++i) CHECK(dist[i].probability == doctest::Approx(std::exp(logits[i]) / z));
}

TEST_CASE("equal logits give uniform sampling frequencies") {
  std::vector<Candidate> cands(3);
  for (std::uint32_t i = 0; i < 3; ++i) cands[i] = Candidate{Edge{0, i}, 0.0, 1.0 / 3.0};
  std::mt19937_64 rng(13);
  std::vector<int> hits(3, 0);
  const int draws = 100000;
  for (int t = 0; t < draws; ++t) ++hits[sample_children(cands, 1, rng).front().neighbor];
  for (const int h : hits) CHECK(std::abs(h / static_cast<double>(draws) - 1.0 / 3.0) < 0.01);
}

TEST_CASE("few candidates are all taken in adjacency order") {
  std::vector<Candidate> cands{{Edge{1, 7}, 0.0, 0.9}, {Edge{2, 3}, 0.0, 0.1}};
  std::mt19937_64 rng(1);
  const auto chosen = sample_children(cands, 8, rng);
  REQUIRE(chosen.size() == 2);
  CHECK(chosen[0] == Edge{1, 7});
  CHECK(chosen[1] == Edge{2, 3});
}

TEST_CASE("draws without replacement are distinct") {
  std::vector<Candidate> cands;
  for (std::uint32_t i = 0; i < 10; ++i) cands.push_back({Edge{0, i}, 0.0, 0.1});
  std::mt19937_64 rng(4);
  for (int t = 0; t < 200; ++t) {
    const auto chosen = sample_children(cands, 4, rng);
    REQUIRE(chosen.size() == 4);
    for (std::size_t i = 1; i < chosen.size(); ++i) CHECK(chosen[i - 1].neighbor < chosen[i].neighbor);
  }
}

TEST_CASE("tree shapes") {
  std::mt19937_64 rng(6);
  SUBCASE("isolated root") {
    const KnowledgeGraph kg(3, 1, {{1, 0, 2}});
    const Matrix ent = Matrix::Random(3, 3), rel = Matrix::Random(2, 3);
    const auto tree = sample_tree(kg, KgSide::kFirst, 0, SamplerOptions{}, SamplerTables(ent, rel), rng);
    CHECK(tree.size() == 1);
    CHECK(tree.height() == 0);
  }
  SUBCASE("path graph with fanout 1 gives the chain") {
    const KnowledgeGraph kg(3, 1, {{0, 0, 1}, {1, 0, 2}});
    const Matrix ent = Matrix::Random(3, 3), rel = Matrix::Random(2, 3);
    SamplerOptions opt;
    opt.fanout = 1;
    for (int t = 0; t < 20; ++t) {
      const auto tree = sample_tree(kg, KgSide::kFirst, 0, opt, SamplerTables(ent, rel), rng);
      REQUIRE(tree.size() == 3);
      CHECK(tree.node(1).entity == 1);
      CHECK(tree.node(2).entity == 2);
      CHECK(tree.node(2).parent == 1);
      CHECK(tree.relation_path(2) == std::vector<RelationId>{0, 0});
    }
  }
  SUBCASE("depth and fanout caps") {
    std::vector<Triple> triples;
    for (EntityId a = 0; a < 12; ++a)
      for (EntityId b = a + 1; b < 12; ++b) triples.push_back({a, (a + b) % 3, b});
    const KnowledgeGraph kg(12, 3, triples);
    const Matrix ent = Matrix::Random(12, 4), rel = Matrix::Random(6, 4);
    SamplerOptions opt;
    opt.depth = 2;
    opt.fanout = 3;
    const auto tree = sample_tree(kg, KgSide::kSecond, 5, opt, SamplerTables(ent, rel), rng);
    CHECK(tree.height() == 2);
    CHECK(tree.size() == 1 + 3 + 9);
    for (const auto& n : tree.nodes()) {
      CHECK(n.child_count <= 3);
      if (n.depth == 2) CHECK(n.child_count == 0);
    }
  }
  SUBCASE("bad root") {
    const KnowledgeGraph kg(2, 1, {{0, 0, 1}});
    const Matrix ent = Matrix::Random(2, 3), rel = Matrix::Random(2, 3);
    CHECK_THROWS_AS(sample_tree(kg, KgSide::kFirst, 2, SamplerOptions{}, SamplerTables(ent, rel), rng), std::out_of_range);
  }
}

TEST_CASE("sampling is deterministic given the rng state") {
  std::vector<Triple> triples;
  for (EntityId a = 0; a < 20; ++a) triples.push_back({a, a % 2, (a * 7 + 3) % 20});
  const KnowledgeGraph kg(20, 2, triples);
  const Matrix ent = Matrix::Random(20, 4), rel = Matrix::Random(4, 4);
  const SamplerTables frozen(ent, rel);
  std::mt19937_64 a(99), b(99);
  SamplerOptions opt;
  opt.fanout = 1;
  for (EntityId r = 0; r < 20; ++r) {
    const auto ta = sample_tree(kg, KgSide::kFirst, r, opt, frozen, a);
    const auto tb = sample_tree(kg, KgSide::kFirst, r, opt, frozen, b);
    REQUIRE(ta.size() == tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta.node(i).entity == tb.node(i).entity);
  }
}

TEST_CASE("full neighbourhood tree holds every edge") {
  const KnowledgeGraph kg(4, 1, {{0, 0, 1}, {2, 0, 0}, {0, 0, 3}});
  const auto tree = full_neighborhood_tree(kg, KgSide::kFirst, 0);
  CHECK(tree.size() == 4);
  CHECK(tree.root().child_count == 3);
}
