#pragma once

#include <span>
#include <utility>
#include <vector>

#include "unea/common.hpp"

namespace unea {

struct SimilarityMatrix {
  enum class Kind { kRawCosine, kCsls };

  MatrixF values;  // |E1| x |E2|
  Kind kind = Kind::kRawCosine;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

using EntityPair = std::pair<EntityId, EntityId>;

// Partial matching between the two graphs: every entity appears at most once.
struct PseudoLabelSet {
  std::vector<EntityPair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

struct Metrics {
  double hits1 = 0.0;
  double hits10 = 0.0;
  double mrr = 0.0;
};

// Cosine similarity of every cross-graph row pair. Throws std::invalid_argument on a zero row.
SimilarityMatrix similarity_matrix(const Matrix& e1, const Matrix& e2, std::size_t workers = 1);

// Cross-domain similarity local scaling:
//   S~[i][j] = 2 S[i][j] - mean(top-delta of row i) - mean(top-delta of column j).
// Requires 1 <= delta <= min(rows, cols).
SimilarityMatrix csls_adjust(const SimilarityMatrix& s, std::size_t delta, std::size_t workers = 1);

// (i, j) such that S[i][j] is the strict maximum of both its row and its column.
// A maximum shared by two cells of a row or column disqualifies that row or column.
PseudoLabelSet mutual_nearest_labels(const SimilarityMatrix& s);

// Hits@1, Hits@10 and MRR of the true counterparts. Ties rank the true match last.
Metrics evaluate(const SimilarityMatrix& s, std::span<const EntityPair> ref_pairs);

struct ScoredPair {
  EntityId first;
  EntityId second;
  float score;
};

// For each row, its top_n columns; all rows merged and sorted by descending score.
std::vector<ScoredPair> top_alignments(const SimilarityMatrix& s, std::size_t top_n);

}  // namespace unea
