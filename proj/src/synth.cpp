#include "unea/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "unea/config.hpp"
#include "unea/embed_store.hpp"

namespace unea {

namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw std::invalid_argument("synth key '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
  }
  return value;
}

// Index drawn with probability proportional to weight + 1.
std::size_t attach(const std::vector<std::size_t>& weight, std::size_t limit, std::mt19937_64& rng) {
  std::size_t total = 0;
  for (std::size_t i = 0; i < limit; ++i) total += weight[i] + 1;
  std::size_t u = std::uniform_int_distribution<std::size_t>(0, total - 1)(rng);
  for (std::size_t i = 0; i < limit; ++i) {
    if (u < weight[i] + 1) return i;
    u -= weight[i] + 1;
  }
  return limit - 1;
}

Matrix unit_gaussian_rows(std::size_t rows, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    do {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(i, c) = normal(rng);
    } while (m.row(i).norm() == 0.0);
    m.row(i).normalize();
  }
  return m;
}

Matrix noisy_copy(const Matrix& base, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out = base;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (sigma > 0.0) {
      for (Eigen::Index c = 0; c < out.cols(); ++c) out(i, c) += sigma * normal(rng);
    }
    const double n = out.row(i).norm();
    if (n > 0.0) out.row(i) /= n;
    else out.row(i) = base.row(i);
  }
  return out;
}

}  // namespace

void SynthSpec::set(std::string_view key, std::string_view value) {
  if (key == "n_entities") n_entities = parse_number<std::uint32_t>(key, value);
  else if (key == "n_relations") n_relations = parse_number<std::uint32_t>(key, value);
  else if (key == "n_triples") n_triples = parse_number<std::uint32_t>(key, value);
  else if (key == "feature_dim") feature_dim = parse_number<std::uint32_t>(key, value);
  else if (key == "feature_noise_sigma") feature_noise_sigma = parse_number<double>(key, value);
  else if (key == "structure_dropout") structure_dropout = parse_number<double>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else throw std::invalid_argument("unknown synth key '" + std::string(key) + "'");
}

void SynthSpec::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid synth spec: " + what); };
  if (n_entities < 2) fail("n_entities must be at least 2");
  if (n_relations < 1) fail("n_relations must be at least 1");
  if (n_triples + 1 < n_entities) fail("n_triples must be at least n_entities - 1");
  const double capacity = static_cast<double>(n_relations) * n_entities * (n_entities - 1.0);
  if (n_triples > capacity) fail("n_triples exceeds the number of distinct triples");
  if (feature_dim < 1) fail("feature_dim must be at least 1");
  if (!(feature_noise_sigma >= 0.0)) fail("feature_noise_sigma must be non-negative");
  if (!(structure_dropout >= 0.0 && structure_dropout < 1.0)) fail("structure_dropout must lie in [0, 1)");
}

SynthSpec SynthSpec::parse(std::string_view text) {
  SynthSpec spec;
  parse_key_values(text, [&](const std::string& key, const std::string& value) { spec.set(key, value); });
  return spec;
}

SynthSpec SynthSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing synth spec: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::string SynthSpec::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "n_entities = " << n_entities << '\n'
      << "n_relations = " << n_relations << '\n'
      << "n_triples = " << n_triples << '\n'
      << "feature_dim = " << feature_dim << '\n'
      << "feature_noise_sigma = " << feature_noise_sigma << '\n'
      << "structure_dropout = " << structure_dropout << '\n'
      << "seed = " << seed << '\n';
  return out.str();
}

SynthBenchmark generate(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(derive_seed(spec.seed, {0x5e}));
  const std::size_t n = spec.n_entities;
  const std::size_t r = spec.n_relations;
  std::uniform_int_distribution<std::size_t> pick_relation(0, r - 1);
  std::bernoulli_distribution flip(0.5);

  std::vector<Triple> triples;
  std::set<Triple> seen;
  std::vector<std::size_t> degree(n, 0);
  auto add = [&](std::size_t a, std::size_t b) {
    Triple t{static_cast<EntityId>(a), static_cast<RelationId>(pick_relation(rng)), static_cast<EntityId>(b)};
    if (flip(rng)) std::swap(t.head, t.tail);
    if (!seen.insert(t).second) return false;
    triples.push_back(t);
    ++degree[a];
    ++degree[b];
    return true;
  };
  // Growth phase: every new entity links to an earlier one, favouring hubs.
  for (std::size_t e = 1; e < n; ++e) add(e, attach(degree, e, rng));
  std::uniform_int_distribution<std::size_t> uniform_entity(0, n - 1);
  const std::size_t budget = 100 * static_cast<std::size_t>(spec.n_triples) + 1000;
  for (std::size_t attempt = 0; triples.size() < spec.n_triples && attempt < budget; ++attempt) {
    const std::size_t a = attach(degree, n, rng);
    const std::size_t b = uniform_entity(rng);
    if (a != b) add(a, b);
  }

  std::vector<EntityId> truth(n);
  std::iota(truth.begin(), truth.end(), 0);
  std::shuffle(truth.begin(), truth.end(), rng);
  std::vector<RelationId> relation_map(r);
  std::iota(relation_map.begin(), relation_map.end(), 0);
  std::shuffle(relation_map.begin(), relation_map.end(), rng);

  // Dropout removes triples only, and never one that would leave an endpoint isolated.
  std::vector<std::size_t> order(triples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto to_drop = static_cast<std::size_t>(spec.structure_dropout * static_cast<double>(triples.size()) + 0.5);
  std::vector<char> dropped(triples.size(), 0);
  std::vector<std::size_t> remaining = degree;
  std::size_t removed = 0;
  for (const auto t : order) {
    if (removed == to_drop) break;
    const auto& tr = triples[t];
    if (remaining[tr.head] < 2 || remaining[tr.tail] < 2) continue;
    dropped[t] = 1;
    --remaining[tr.head];
    --remaining[tr.tail];
    ++removed;
  }
  std::vector<Triple> triples2;
  for (std::size_t t = 0; t < triples.size(); ++t) {
    if (dropped[t]) continue;
    triples2.push_back({truth[triples[t].head], relation_map[triples[t].relation], truth[triples[t].tail]});
  }
  std::sort(triples2.begin(), triples2.end());

  IdMap ent1, ent2, rel1, rel2;
  for (std::size_t e = 0; e < n; ++e) {
    ent1.add(static_cast<std::int64_t>(e), "g1/entity_" + std::to_string(e));
    ent2.add(static_cast<std::int64_t>(n + e), "g2/entity_" + std::to_string(e));
  }
  for (std::size_t k = 0; k < r; ++k) {
    rel1.add(static_cast<std::int64_t>(k), "g1/relation_" + std::to_string(k));
    rel2.add(static_cast<std::int64_t>(r + k), "g2/relation_" + std::to_string(k));
  }

  SynthBenchmark bench;
  bench.data.g1 = KnowledgeGraph(std::move(ent1), std::move(rel1), std::move(triples));
  bench.data.g2 = KnowledgeGraph(std::move(ent2), std::move(rel2), std::move(triples2));
  for (std::size_t e = 0; e < n; ++e) bench.data.ref_pairs.emplace_back(static_cast<EntityId>(e), truth[e]);

  const Matrix entity_base = unit_gaussian_rows(n, spec.feature_dim, rng);
  const Matrix relation_base = unit_gaussian_rows(r, spec.feature_dim, rng);
  const double sigma = spec.feature_noise_sigma / std::sqrt(static_cast<double>(spec.feature_dim));
  bench.features.entities[0].rows = noisy_copy(entity_base, sigma, rng);
  bench.features.relations[0].rows = noisy_copy(relation_base, sigma, rng);
  Matrix entity2(entity_base.rows(), entity_base.cols());
  for (std::size_t e = 0; e < n; ++e) entity2.row(truth[e]) = entity_base.row(static_cast<Eigen::Index>(e));
  Matrix relation2(relation_base.rows(), relation_base.cols());
  for (std::size_t k = 0; k < r; ++k) relation2.row(relation_map[k]) = relation_base.row(static_cast<Eigen::Index>(k));
  bench.features.entities[1].rows = noisy_copy(entity2, sigma, rng);
  bench.features.relations[1].rows = noisy_copy(relation2, sigma, rng);
  bench.truth = std::move(truth);
  return bench;
}

void write_benchmark(const SynthBenchmark& bench, const std::filesystem::path& dir) {
  save_kg_pair(bench.data, dir);
  for (std::size_t s = 0; s < 2; ++s) {
    write_emb(dir / kEntityFeatureFiles[s], bench.features.entities[s].rows);
    write_emb(dir / kRelationFeatureFiles[s], bench.features.relations[s].rows);
  }
}

}  // namespace unea
