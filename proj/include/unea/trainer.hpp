#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "unea/alignment.hpp"
#include "unea/config.hpp"
#include "unea/embed_store.hpp"
#include "unea/kg_data.hpp"
#include "unea/losses.hpp"
#include "unea/tree_sampler.hpp"

namespace unea {

struct FeatureSet {
  std::array<FeatureTable, 2> entities;
  std::array<FeatureTable, 2> relations;
};

// Default feature file names inside a data directory.
inline constexpr const char* kEntityFeatureFiles[2] = {"ent_1.emb", "ent_2.emb"};
inline constexpr const char* kRelationFeatureFiles[2] = {"rel_1.emb", "rel_2.emb"};

// Loads the four feature tables of a data directory and checks their counts against the
// id files. Empty path lists select the default file names; otherwise both sides are given.
FeatureSet load_feature_set(const std::filesystem::path& data_dir,
                            std::span<const std::filesystem::path> entity_files = {},
                            std::span<const std::filesystem::path> relation_files = {});

// splitmix64 chain; gives every (purpose, refresh, side, entity) its own stream.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> salt);

// Adam with bias correction; moments are kept per parameter tensor.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(std::span<Matrix* const> params, std::span<const Matrix> grads);
  std::uint64_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

// Randomness and membership fixed for one optimisation step. Drawing it up front
// lets the loss be re-evaluated at perturbed parameters with identical samples.
struct BatchPlan {
  std::vector<EntityPair> pairs;
  AlignmentNegatives negatives;
  std::array<std::vector<EntityId>, 2> members;  // sorted entities to encode, per side
  std::array<FeatureNegatives, 2> entity_negatives;
  std::array<std::array<FeatureNegatives, 2>, 2> relation_negatives;  // [side][forward, inverse]
  std::array<TopologySample, 2> topology;
};

struct EpochRecord {
  std::uint32_t epoch = 0;
  LossReport loss;
  std::size_t pseudo_labels = 0;
  std::optional<Metrics> metrics;
  bool final = false;
};

// The tree an entity gets at the given refresh: a sampled tree from the frozen tables,
// or its full one-hop neighbourhood under the plain-GNN ablation.
RootedTree tree_for(const KnowledgeGraph& kg, KgSide side, EntityId root, const SamplerTables& frozen,
                    const TrainConfig& config, std::uint32_t refresh);

using Gradients = std::vector<Matrix>;  // parallel to trainable_parameters()

class Trainer {
 public:
  using Logger = std::function<void(std::string_view)>;

  // Initialises every table from the features. Throws DataError when feature counts
  // do not match the graphs, std::invalid_argument on a bad config.
  Trainer(const KnowledgeGraphPair& data, FeatureSet features, TrainConfig config, Logger log = {});

  // Momentum update, tree resampling, full encoding and pseudo-label regeneration.
  void refresh();
  // One pass over the pseudo-labels in batches. Throws NumericError on a non-finite loss.
  LossReport train_epoch();
  // The whole schedule; on_epoch sees each record as soon as it is produced.
  std::vector<EpochRecord> run(const std::function<void(const EpochRecord&)>& on_epoch = {});

  // Re-encodes every root with the live parameters and the cached trees.
  void encode_all();
  // Metrics of the latest encoding against the reference pairs.
  Metrics evaluate(bool csls = false) const;

  BatchPlan plan_batch(std::span<const EntityPair> pairs, std::mt19937_64& rng) const;
  // Loss of one planned batch; when grads is non-null it is overwritten with the gradients.
  LossReport batch_loss(const BatchPlan& plan, Gradients* grads);

  EmbeddingTables& tables() { return tables_; }
  const EmbeddingTables& tables() const { return tables_; }
  const TrainConfig& config() const { return config_; }
  const KnowledgeGraphPair& data() const { return *data_; }
  const std::vector<RootedTree>& trees(KgSide side) const { return trees_[index_of(side)]; }
  const Matrix& outputs(KgSide side) const { return outputs_[index_of(side)]; }
  const PseudoLabelSet& pseudo_labels() const { return pseudo_; }
  std::uint32_t epoch() const { return epoch_; }
  std::uint32_t refresh_count() const { return refreshes_; }

 private:
  void resample_trees();
  Gradients zero_gradients();
  void log(std::string_view message) const;

  const KnowledgeGraphPair* data_;
  FeatureSet features_;
  TrainConfig config_;
  Logger log_;
  EmbeddingTables tables_;
  Adam optimizer_;
  std::mt19937_64 rng_;
  std::array<std::vector<RootedTree>, 2> trees_;
  std::array<Matrix, 2> outputs_;
  PseudoLabelSet pseudo_;
  std::uint32_t epoch_ = 0;
  std::uint32_t refreshes_ = 0;
};

}  // namespace unea
