#pragma once

#include <optional>
#include <random>
#include <span>
#include <vector>

#include "unea/common.hpp"
#include "unea/kg_data.hpp"
#include "unea/relation_geometry.hpp"

namespace unea {

// Nodes are stored breadth-first; the children of a node are contiguous.
struct TreeNode {
  EntityId entity = 0;
  RelationId relation = 0;  // edge from the parent; meaningless at the root
  std::int32_t parent = -1;
  std::uint32_t depth = 0;
  std::uint32_t first_child = 0;
  std::uint32_t child_count = 0;
};

class RootedTree {
 public:
  RootedTree(KgSide side, EntityId root);

  KgSide side() const { return side_; }
  const TreeNode& root() const { return nodes_.front(); }
  const TreeNode& node(std::size_t i) const { return nodes_.at(i); }
  std::span<const TreeNode> nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  std::uint32_t height() const;

  // Appends the children of node i in one block. Each node may receive children once.
  void attach_children(std::size_t i, std::span<const Edge> edges);

  // Relation ids along root -> node i (empty for the root).
  std::vector<RelationId> relation_path(std::size_t i) const;

 private:
  KgSide side_;
  std::vector<TreeNode> nodes_;
};

struct SamplerOptions {
  std::uint32_t depth = 2;
  std::uint32_t fanout = 8;
  double leaky_slope = 0.01;
  bool uniform = false;  // ablation: uniform child distribution instead of attention
};

// Momentum copies as the sampler sees them: relation rows pre-normalised.
class SamplerTables {
 public:
  SamplerTables(const Matrix& entities, const Matrix& relations);

  std::span<const double> entity(EntityId e) const;
  std::span<const double> relation(RelationId r) const;
  std::size_t dim() const { return static_cast<std::size_t>(unit_relations_.cols()); }

 private:
  const Matrix* entities_;
  Matrix unit_relations_;
};

double leaky_relu(double x, double slope);

// LeakyReLU(e_root^T W_p e_cand + e_parent^T W_k e_cand) / ln(1 + deg_cand).
// Throws std::invalid_argument when deg_cand is zero or dimensions differ.
double sampling_logit(std::span<const double> e_root, std::span<const double> e_parent,
                      std::span<const double> e_cand, const UnitRelationVector& r_path,
                      const UnitRelationVector& r_edge, std::size_t deg_cand, double slope = 0.01);

struct Candidate {
  Edge edge;
  double logit = 0.0;
  double probability = 0.0;
};

// Softmax over the admissible neighbours of `entity`: every adjacency entry except
// those leading back to `parent`. path is the root -> entity composed relation and
// is absent when entity is the root itself (single-hop paths use p = k).
std::vector<Candidate> child_distribution(const KnowledgeGraph& kg, EntityId root, EntityId entity,
                                          std::optional<EntityId> parent,
                                          const std::optional<UnitRelationVector>& path,
                                          const SamplerTables& frozen, const SamplerOptions& options);

// Draws min(fanout, |candidates|) distinct candidates by sequential renormalised draws.
// When every candidate fits they are all taken in adjacency order. Output keeps adjacency order.
std::vector<Edge> sample_children(std::span<const Candidate> candidates, std::uint32_t fanout,
                                  std::mt19937_64& rng);

// Breadth-first expansion to options.depth. Deterministic given rng state and frozen tables.
RootedTree sample_tree(const KnowledgeGraph& kg, KgSide side, EntityId root, const SamplerOptions& options,
                       const SamplerTables& frozen, std::mt19937_64& rng);

// One-hop tree holding the entire neighbourhood; the plain-GNN ablation encodes these.
RootedTree full_neighborhood_tree(const KnowledgeGraph& kg, KgSide side, EntityId root);

}  // namespace unea
