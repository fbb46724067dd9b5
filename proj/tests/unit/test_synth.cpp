#include <doctest.h>

#include <algorithm>
#include <set>

#include "../support/oracles.hpp"
#include "unea/alignment.hpp"
#include "unea/synth.hpp"

using namespace unea;

namespace {

double feature_hits1(const SynthBenchmark& b) {
  const auto s = similarity_matrix(b.features.entities[0].rows, b.features.entities[1].rows);
  return evaluate(s, b.data.ref_pairs).hits1;
}

}  // namespace

TEST_CASE("spec parsing and validation") {
  const auto spec = SynthSpec::parse("n_entities = 50\nfeature_noise_sigma = 0.25 # comment\n");
  CHECK(spec.n_entities == 50);
  CHECK(spec.feature_noise_sigma == 0.25);
  CHECK(SynthSpec::parse(spec.to_text()).to_text() == spec.to_text());
  CHECK_THROWS_AS(SynthSpec::parse("n_nodes = 3"), std::invalid_argument);
  SynthSpec bad;
  bad.structure_dropout = 1.0;
  CHECK_THROWS_AS(generate(bad), std::invalid_argument);
  bad = SynthSpec{};
  bad.n_triples = 10;
  CHECK_THROWS_AS(generate(bad), std::invalid_argument);
}

TEST_CASE("default benchmark shape") {
  const auto b = generate(SynthSpec{});
  CHECK(b.data.g1.entity_count() == 200);
  CHECK(b.data.g1.relation_count() == 10);
  CHECK(b.data.g1.triples().size() == 800);
  CHECK(b.data.g2.triples().size() == 720);
  // ground truth is a bijection
  std::set<EntityId> image(b.truth.begin(), b.truth.end());
  CHECK(image.size() == 200);
  // dropout removes triples, never entities
  for (EntityId e = 0; e < 200; ++e) CHECK(b.data.g2.degree(b.truth[e]) >= 1);
}

TEST_CASE("hubs emerge from preferential attachment") {
  const auto b = generate(SynthSpec{});
  std::size_t max_degree = 0;
  for (EntityId e = 0; e < 200; ++e) max_degree = std::max(max_degree, b.data.g1.degree(e));
  // mean degree is 8
  CHECK(max_degree > 3 * 8);
}

TEST_CASE("noiseless twin is isomorphic with identical features") {
  SynthSpec spec;
  spec.feature_noise_sigma = 0.0;
  spec.structure_dropout = 0.0;
  const auto b = generate(spec);
  std::vector<Triple> mapped;
  for (const auto& t : b.data.g1.triples()) mapped.push_back({b.truth[t.head], 0, b.truth[t.tail]});
  std::vector<Triple> g2;
  for (const auto& t : b.data.g2.triples()) g2.push_back({t.head, 0, t.tail});
  std::sort(mapped.begin(), mapped.end());
  std::sort(g2.begin(), g2.end());
  CHECK(mapped == g2);
  for (EntityId e = 0; e < 200; ++e) CHECK(b.features.entities[0].rows.row(e) == b.features.entities[1].rows.row(b.truth[e]));
  // init embeddings through any orthonormal projection keep cosines, so feature matching is exact
  std::mt19937_64 rng(0);
  const Matrix p = orthonormal_projection(spec.feature_dim, 300, rng);
  const auto s = similarity_matrix(init_embeddings(b.features.entities[0], p), init_embeddings(b.features.entities[1], p));
  CHECK(evaluate(s, b.data.ref_pairs).hits1 == 1.0);
}

TEST_CASE("heavy noise degrades feature-only matching") {
  SynthSpec clean, noisy;
  clean.feature_noise_sigma = 0.0;
  noisy.feature_noise_sigma = 0.5;
  CHECK(feature_hits1(generate(noisy)) < feature_hits1(generate(clean)));
}

TEST_CASE("generation is deterministic per seed") {
  SynthSpec a, b;
  b.seed = 1;
  const auto x = generate(a), y = generate(a), z = generate(b);
  CHECK(x.data.g2.triples() == y.data.g2.triples());
  CHECK(x.features.entities[1].rows == y.features.entities[1].rows);
  CHECK(x.truth != z.truth);
}

TEST_CASE("written benchmark loads back") {
  const auto b = generate(SynthSpec{});
  const auto dir = oracle::temp_dir("synth");
  write_benchmark(b, dir);
  const auto data = load_kg_pair(dir);
  CHECK(data.g2.triples() == b.data.g2.triples());
  CHECK(data.ref_pairs == b.data.ref_pairs);
  const auto f = load_features(dir / kEntityFeatureFiles[1], dir / "ent_ids_2");
  CHECK(f.count() == 200);
  CHECK((f.rows - b.features.entities[1].rows).cwiseAbs().maxCoeff() < 1e-6);
  std::filesystem::remove_all(dir);
}
