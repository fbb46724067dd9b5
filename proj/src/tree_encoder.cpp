#include "unea/tree_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace unea {

double branch_attention(std::span<const double> e_root, std::span<const double> e_parent,
                        std::span<const double> e_child, const UnitRelationVector& r_path,
                        const UnitRelationVector& r_edge, std::span<const double> w_att, double slope) {
  const std::size_t d = e_child.size();
  if (w_att.size() != 3 * d || e_root.size() != d || e_parent.size() != d) {
    throw std::invalid_argument("branch_attention: w_att must have length 3d");
  }
  const auto root_view = householder_apply(r_path, e_root, Transpose::kYes);
  const auto parent_view = householder_apply(r_edge, e_parent, Transpose::kYes);
  const double score = dot(w_att.subspan(0, d), root_view) + dot(w_att.subspan(d, d), parent_view) +
                       dot(w_att.subspan(2 * d, d), e_child);
  return leaky_relu(score, slope);
}

AggregateResult aggregate_node(std::span<const double> e_root, std::span<const double> e_node,
                               std::span<const ChildMessage> children, std::span<const double> w_att,
                               double slope) {
  AggregateResult out;
  out.embedding.assign(e_node.begin(), e_node.end());
  if (!children.empty()) {
    std::vector<double> scores;
    for (const auto& c : children) {
      scores.push_back(branch_attention(e_root, e_node, c.embedding, c.path, c.edge, w_att, slope));
    }
    const double peak = *std::max_element(scores.begin(), scores.end());
    double total = 0.0;
    for (auto& s : scores) total += s = std::exp(s - peak);
    for (std::size_t i = 0; i < children.size(); ++i) {
      const double a = scores[i] / total;
      out.attention.push_back(a);
      const auto message = householder_apply(children[i].edge, children[i].embedding, Transpose::kYes);
      for (std::size_t j = 0; j < message.size(); ++j) out.embedding[j] += a * message[j];
    }
  }
  for (auto& v : out.embedding) v = leaky_relu(v, slope);
  return out;
}

ad::Var encode_tree(ad::Tape& tape, const RootedTree& tree, const EncoderParams& params, double slope,
                    std::vector<double>* attention) {
  const std::size_t n = tree.size();
  const auto nodes = tree.nodes();

  std::unordered_map<RelationId, ad::Var> unit_relation;
  auto relation = [&](RelationId k) {
    auto [it, fresh] = unit_relation.try_emplace(k);
    if (fresh) it->second = tape.normalize(tape.row(params.relations, k));
    return it->second;
  };

  std::vector<ad::Var> base(n);
  std::vector<ad::Var> path(n);
  for (std::size_t i = 0; i < n; ++i) {
    base[i] = tape.row(params.entities, nodes[i].entity);
    if (nodes[i].parent < 0) continue;
    const auto parent = static_cast<std::size_t>(nodes[i].parent);
    const ad::Var edge = relation(nodes[i].relation);
    if (!path[parent].valid()) {
      path[i] = edge;  // single hop: p = k
      continue;
    }
    const ad::Var product = tape.hadamard(path[parent], edge);
    path[i] = norm(tape.value(product)) < kCompositionFloor ? edge : tape.normalize(product);
  }

  const auto d = static_cast<Eigen::Index>(tape.value(base[0]).size());
  const ad::Var w_root = tape.segment(params.attention, 0, 0, d);
  const ad::Var w_parent = tape.segment(params.attention, 0, d, d);
  const ad::Var w_child = tape.segment(params.attention, 0, 2 * d, d);

  if (attention != nullptr) attention->assign(n, 1.0);
  std::vector<ad::Var> out(n);
  std::vector<ad::Var> scores;
  std::vector<ad::Var> messages;
  for (std::size_t i = n; i-- > 0;) {
    const auto& node = nodes[i];
    if (node.child_count == 0) {
      out[i] = tape.leaky_relu(base[i], slope);
      continue;
    }
    scores.clear();
    messages.clear();
    for (std::uint32_t c = node.first_child; c < node.first_child + node.child_count; ++c) {
      const ad::Var edge = relation(nodes[c].relation);
      const ad::Var root_view = tape.householder(path[c], base[0]);
      const ad::Var parent_view = tape.householder(edge, base[i]);
      const ad::Var terms[] = {tape.dot(w_root, root_view), tape.dot(w_parent, parent_view),
                               tape.dot(w_child, out[c])};
      scores.push_back(tape.leaky_relu(tape.sum(terms), slope));
      messages.push_back(tape.householder(edge, out[c]));
    }
    const ad::Var weights = tape.softmax(tape.stack(scores));
    if (attention != nullptr) {
      const auto a = tape.value(weights);
      std::copy(a.begin(), a.end(), attention->begin() + node.first_child);
    }
    out[i] = tape.leaky_relu(tape.add(base[i], tape.weighted_sum(weights, messages)), slope);
  }
  return out[0];
}

std::vector<double> encode_root(const RootedTree& tree, const Matrix& entities, const Matrix& relations,
                                const Matrix& attention, double slope, std::vector<double>* node_attention) {
  ad::Tape tape;
  const EncoderParams params{tape.bind(entities, nullptr), tape.bind(relations, nullptr),
                             tape.bind(attention, nullptr)};
  const auto root = encode_tree(tape, tree, params, slope, node_attention);
  const auto value = tape.value(root);
  return {value.begin(), value.end()};
}

}  // namespace unea
