#pragma once

#include <random>
#include <span>
#include <vector>

#include "unea/alignment.hpp"
#include "unea/autodiff.hpp"
#include "unea/embed_store.hpp"
#include "unea/kg_data.hpp"

namespace unea {

// exp(a . b / tau). Throws std::invalid_argument when tau <= 0.
double pair_score(std::span<const double> a, std::span<const double> b, double tau);
// a . b / tau, the log of pair_score.
double log_pair_score(std::span<const double> a, std::span<const double> b, double tau);

// k distinct values from [0, n) \ {exclude}, uniformly (Floyd's algorithm). k is capped
// at the number of admissible values. Pass exclude >= n to exclude nothing.
std::vector<std::uint32_t> sample_without_replacement(std::size_t n, std::size_t k, std::size_t exclude,
                                                      std::mt19937_64& rng);

// --- contrastive alignment -------------------------------------------------

struct AlignmentNegatives {
  std::vector<std::vector<EntityId>> forward;   // per pair: y in E2, y != j
  std::vector<std::vector<EntityId>> backward;  // per pair: x in E1, x != i
};

AlignmentNegatives draw_alignment_negatives(std::span<const EntityPair> pairs, std::size_t n1, std::size_t n2,
                                            std::size_t n_neg, std::mt19937_64& rng);

// Mean over 2|pairs| InfoNCE sub-losses. out1/out2 are indexed by entity id; only the
// entries named by pairs and negatives need to be valid. Throws on an empty pair list.
ad::Var alignment_loss(ad::Tape& tape, std::span<const EntityPair> pairs, const AlignmentNegatives& negatives,
                       std::span<const ad::Var> out1, std::span<const ad::Var> out2, double tau);

double alignment_loss(const PseudoLabelSet& pseudo, const Matrix& e1_out, const Matrix& e2_out, double tau,
                      std::size_t n_neg, std::mt19937_64& rng);

// --- feature mutual information (entities and relations) -------------------

struct FeatureNegatives {
  std::vector<std::vector<std::uint32_t>> features;  // output i against other features
  std::vector<std::vector<std::uint32_t>> outputs;   // feature i against other outputs
};

FeatureNegatives draw_feature_negatives(std::size_t items, std::size_t n_neg, std::mt19937_64& rng);

// normalize(f * P) recorded on the tape.
ad::Var project_feature(ad::Tape& tape, std::span<const double> feature, ad::ParamId projection);

// Bidirectional InfoNCE between outputs[i] and features[i], negatives drawn among the
// other items, averaged over items.
ad::Var feature_mi_loss(ad::Tape& tape, std::span<const ad::Var> outputs, std::span<const ad::Var> features,
                        const FeatureNegatives& negatives, double tau);

double feature_mi_loss(const Matrix& outputs, const FeatureTable& features, const Matrix& projection, double tau,
                       std::size_t n_neg, std::mt19937_64& rng);

// --- topology mutual information -------------------------------------------

inline constexpr double kProbabilityFloor = 1e-7;

// sigmoid(e_i^T W_n e_j)
double edge_weight(std::span<const double> e_i, std::span<const double> e_j, const Matrix& edge_scoring);

struct TopologySample {
  std::vector<EntityPair> positives;  // one per triple (head, tail)
  std::vector<EntityPair> negatives;  // unlinked ordered pairs
};

// Positives are the triples whose endpoints are both in `members` (all entities when
// members is empty); negatives are rejection-sampled unlinked pairs among the same set.
TopologySample draw_topology_sample(const KnowledgeGraph& kg, std::span<const EntityId> members,
                                    double neg_ratio, std::mt19937_64& rng);

// Mean binary cross-entropy of the estimated edge weights against adjacency.
ad::Var topology_mi_loss(ad::Tape& tape, const TopologySample& sample, std::span<const ad::Var> outputs,
                         ad::ParamId edge_scoring);

double topology_mi_loss(const KnowledgeGraph& kg, const Matrix& outputs, const Matrix& edge_scoring,
                        double neg_ratio, std::mt19937_64& rng);

// --- combination -----------------------------------------------------------

struct LossReport {
  double l_align = 0.0;
  double l_ent = 0.0;
  double l_rel = 0.0;
  double l_topo = 0.0;
  double l_mi = 0.0;
  double total = 0.0;
};

// l_mi = l_ent + l_rel + l_topo; total = lambda * l_align + (1 - lambda) * l_mi.
// Throws std::invalid_argument when lambda is outside [0, 1].
LossReport total_loss(double l_align, double l_ent, double l_rel, double l_topo, double lambda);

}  // namespace unea
