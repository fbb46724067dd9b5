#include "unea/tree_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace unea {

RootedTree::RootedTree(KgSide side, EntityId root) : side_(side) {
  nodes_.push_back(TreeNode{root, 0, -1, 0, 0, 0});
}

std::uint32_t RootedTree::height() const {
  std::uint32_t h = 0;
  for (const auto& n : nodes_) h = std::max(h, n.depth);
  return h;
}

void RootedTree::attach_children(std::size_t i, std::span<const Edge> edges) {
  if (i >= nodes_.size()) throw std::out_of_range("RootedTree::attach_children");
  if (nodes_[i].child_count != 0) throw std::logic_error("RootedTree: children already attached");
  const auto first = static_cast<std::uint32_t>(nodes_.size());
  const auto depth = nodes_[i].depth + 1;
  for (const auto& e : edges) {
    nodes_.push_back(TreeNode{e.neighbor, e.relation, static_cast<std::int32_t>(i), depth, 0, 0});
  }
  nodes_[i].first_child = first;
  nodes_[i].child_count = static_cast<std::uint32_t>(edges.size());
}

std::vector<RelationId> RootedTree::relation_path(std::size_t i) const {
  std::vector<RelationId> path;
  for (auto at = static_cast<std::int32_t>(i); nodes_.at(static_cast<std::size_t>(at)).parent >= 0;
       at = nodes_[static_cast<std::size_t>(at)].parent) {
    path.push_back(nodes_[static_cast<std::size_t>(at)].relation);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

SamplerTables::SamplerTables(const Matrix& entities, const Matrix& relations)
    : entities_(&entities), unit_relations_(relations) {
  if (entities.cols() != relations.cols()) throw std::invalid_argument("SamplerTables: dimension mismatch");
  for (Eigen::Index r = 0; r < unit_relations_.rows(); ++r) {
    const double n = unit_relations_.row(r).norm();
    if (!(n > 0.0)) throw NumericError("zero relation vector at row " + std::to_string(r));
    unit_relations_.row(r) /= n;
  }
}

std::span<const double> SamplerTables::entity(EntityId e) const {
  return {entities_->row(e).data(), static_cast<std::size_t>(entities_->cols())};
}

std::span<const double> SamplerTables::relation(RelationId r) const {
  return {unit_relations_.row(r).data(), static_cast<std::size_t>(unit_relations_.cols())};
}

double leaky_relu(double x, double slope) { return x > 0.0 ? x : slope * x; }

double sampling_logit(std::span<const double> e_root, std::span<const double> e_parent,
                      std::span<const double> e_cand, const UnitRelationVector& r_path,
                      const UnitRelationVector& r_edge, std::size_t deg_cand, double slope) {
  if (deg_cand == 0) throw std::invalid_argument("sampling_logit: candidate degree is zero");
  if (e_root.size() != e_cand.size() || e_parent.size() != e_cand.size()) {
    throw std::invalid_argument("sampling_logit: dimension mismatch");
  }
  const auto via_path = householder_apply(r_path, e_cand);
  const auto via_edge = householder_apply(r_edge, e_cand);
  const double bilinear = dot(e_root, via_path) + dot(e_parent, via_edge);
  return leaky_relu(bilinear, slope) / std::log1p(static_cast<double>(deg_cand));
}

std::vector<Candidate> child_distribution(const KnowledgeGraph& kg, EntityId root, EntityId entity,
                                          std::optional<EntityId> parent,
                                          const std::optional<UnitRelationVector>& path,
                                          const SamplerTables& frozen, const SamplerOptions& options) {
  std::vector<Candidate> out;
  for (const auto& edge : kg.neighbors(entity)) {
    if (parent && edge.neighbor == *parent) continue;
    out.push_back(Candidate{edge, 0.0, 0.0});
  }
  if (out.empty()) return out;

  if (!options.uniform) {
    const auto e_root = frozen.entity(root);
    const auto e_parent = frozen.entity(entity);
    for (auto& c : out) {
      const auto r_edge = UnitRelationVector::from(frozen.relation(c.edge.relation));
      const auto r_path = path ? compose_relation(path->values(), r_edge.values()) : r_edge;
      c.logit = sampling_logit(e_root, e_parent, frozen.entity(c.edge.neighbor), r_path, r_edge,
                               kg.degree(c.edge.neighbor), options.leaky_slope);
    }
  }
  double peak = out.front().logit;
  for (const auto& c : out) peak = std::max(peak, c.logit);
  double total = 0.0;
  for (auto& c : out) total += c.probability = std::exp(c.logit - peak);
  for (auto& c : out) c.probability /= total;
  return out;
}

std::vector<Edge> sample_children(std::span<const Candidate> candidates, std::uint32_t fanout,
                                  std::mt19937_64& rng) {
  std::vector<Edge> chosen;
  if (candidates.size() <= fanout) {
    for (const auto& c : candidates) chosen.push_back(c.edge);
    return chosen;
  }
  std::vector<double> weight(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) weight[i] = candidates[i].probability;
  std::vector<std::size_t> picked;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::uint32_t draw = 0; draw < fanout; ++draw) {
    const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
    const double target = unit(rng) * total;
    double running = 0.0;
    std::size_t pick = weight.size();
    std::size_t last_live = weight.size();
    for (std::size_t i = 0; i < weight.size(); ++i) {
      if (weight[i] <= 0.0) continue;
      last_live = i;
      running += weight[i];
      if (target < running) {
        pick = i;
        break;
      }
    }
    if (pick == weight.size()) pick = last_live;  // rounding at the upper end
    picked.push_back(pick);
    weight[pick] = 0.0;
  }
  std::sort(picked.begin(), picked.end());
  for (const auto i : picked) chosen.push_back(candidates[i].edge);
  return chosen;
}

RootedTree sample_tree(const KnowledgeGraph& kg, KgSide side, EntityId root, const SamplerOptions& options,
                       const SamplerTables& frozen, std::mt19937_64& rng) {
  if (root >= kg.entity_count()) throw std::out_of_range("sample_tree: root id " + std::to_string(root));
  RootedTree tree(side, root);
  // Composed frozen path relation per node, parallel to the tree's node array.
  std::vector<std::optional<UnitRelationVector>> paths(1);
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const TreeNode node = tree.node(i);
    if (node.depth >= options.depth) continue;
    const std::optional<EntityId> parent =
        node.parent >= 0 ? std::optional<EntityId>(tree.node(static_cast<std::size_t>(node.parent)).entity)
                         : std::nullopt;
    const auto candidates = child_distribution(kg, root, node.entity, parent, paths[i], frozen, options);
    if (candidates.empty()) continue;
    const auto children = sample_children(candidates, options.fanout, rng);
    tree.attach_children(i, children);
    for (const auto& edge : children) {
      const auto r_edge = frozen.relation(edge.relation);
      paths.emplace_back(paths[i] ? compose_relation(paths[i]->values(), r_edge) : UnitRelationVector::from(r_edge));
    }
  }
  return tree;
}

RootedTree full_neighborhood_tree(const KnowledgeGraph& kg, KgSide side, EntityId root) {
  RootedTree tree(side, root);
  const auto edges = kg.neighbors(root);
  if (!edges.empty()) tree.attach_children(0, edges);
  return tree;
}

}  // namespace unea
