#pragma once

#include <span>
#include <vector>

#include "unea/autodiff.hpp"
#include "unea/relation_geometry.hpp"
#include "unea/tree_sampler.hpp"

namespace unea {

// Unnormalised branch score LeakyReLU(w_att^T [W_p^T e_root || W_k^T e_parent || e_child]).
// Throws std::invalid_argument unless w_att has length 3d.
double branch_attention(std::span<const double> e_root, std::span<const double> e_parent,
                        std::span<const double> e_child, const UnitRelationVector& r_path,
                        const UnitRelationVector& r_edge, std::span<const double> w_att, double slope = 0.01);

struct ChildMessage {
  std::span<const double> embedding;  // the child's aggregated embedding e'
  UnitRelationVector edge;            // k
  UnitRelationVector path;            // p, root -> child
};

struct AggregateResult {
  std::vector<double> embedding;
  std::vector<double> attention;  // one weight per child, sums to one
};

// e_x' = LeakyReLU(e_x + sum_c a_c W_k^T e_c'), a = softmax of branch scores.
AggregateResult aggregate_node(std::span<const double> e_root, std::span<const double> e_node,
                               std::span<const ChildMessage> children, std::span<const double> w_att,
                               double slope = 0.01);

// Tape parameter handles for one knowledge graph's tables.
struct EncoderParams {
  ad::ParamId entities;
  ad::ParamId relations;
  ad::ParamId attention;
};

// Records the leaves -> root encoding of tree on tape and returns the root's output.
// If attention is non-null it receives, per tree node, the weight the node carries
// in its parent's aggregation (1 for the root).
ad::Var encode_tree(ad::Tape& tape, const RootedTree& tree, const EncoderParams& params, double slope,
                    std::vector<double>* attention = nullptr);

// Convenience forward pass over concrete tables.
std::vector<double> encode_root(const RootedTree& tree, const Matrix& entities, const Matrix& relations,
                                const Matrix& attention, double slope = 0.01,
                                std::vector<double>* node_attention = nullptr);

}  // namespace unea
