#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "unea/kg_data.hpp"
#include "unea/trainer.hpp"

namespace unea {

// Twin-graph benchmark with a planted alignment. Keys of a SynthSpec file match the field names.
struct SynthSpec {
  std::uint32_t n_entities = 200;
  std::uint32_t n_relations = 10;
  std::uint32_t n_triples = 800;
  std::uint32_t feature_dim = 8;
  // Noise vectors have per-coordinate deviation sigma / sqrt(feature_dim), so their
  // expected norm is about sigma regardless of the dimension.
  double feature_noise_sigma = 0.1;
  double structure_dropout = 0.1;    // fraction of g2 triples removed
  std::uint64_t seed = 0;

  void set(std::string_view key, std::string_view value);
  // Throws std::invalid_argument when no benchmark can be generated from these values.
  void validate() const;
  static SynthSpec parse(std::string_view text);
  static SynthSpec load(const std::filesystem::path& path);
  std::string to_text() const;
};

struct SynthBenchmark {
  KnowledgeGraphPair data;
  FeatureSet features;
  std::vector<EntityId> truth;  // g1 dense id -> g2 dense id
};

// Deterministic per spec.seed.
SynthBenchmark generate(const SynthSpec& spec);

// Graph files in the usual directory layout plus ent_{1,2}.emb and rel_{1,2}.emb.
void write_benchmark(const SynthBenchmark& bench, const std::filesystem::path& dir);

}  // namespace unea
