#include "unea/alignment.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

#include "unea/parallel.hpp"

namespace unea {

namespace {

Matrix unit_rows(const Matrix& m, const char* which) {
  Matrix out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (!(n > 0.0)) {
      throw std::invalid_argument(std::string("similarity_matrix: zero-norm row ") + std::to_string(i) + " in " +
                                  which);
    }
    out.row(i) /= n;
  }
  return out;
}

// Mean of the delta largest values, summed in descending order.
double top_mean(std::vector<float>& buffer, std::size_t delta) {
  std::partial_sort(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(delta), buffer.end(),
                    std::greater<>());
  double total = 0.0;
  for (std::size_t i = 0; i < delta; ++i) total += buffer[i];
  return total / static_cast<double>(delta);
}

}  // namespace

SimilarityMatrix similarity_matrix(const Matrix& e1, const Matrix& e2, std::size_t workers) {
  if (e1.cols() != e2.cols()) throw std::invalid_argument("similarity_matrix: dimension mismatch");
  const Matrix a = unit_rows(e1, "first table");
  const Matrix b = unit_rows(e2, "second table");
  SimilarityMatrix s{MatrixF(a.rows(), b.rows()), SimilarityMatrix::Kind::kRawCosine};
  parallel_for(static_cast<std::size_t>(a.rows()), workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    constexpr std::size_t kBlock = 256;
    for (std::size_t lo = begin; lo < end; lo += kBlock) {
      const auto len = static_cast<Eigen::Index>(std::min(kBlock, end - lo));
      const auto start = static_cast<Eigen::Index>(lo);
      Matrix block = a.middleRows(start, len) * b.transpose();
      s.values.middleRows(start, len) = block.cwiseMax(-1.0).cwiseMin(1.0).cast<float>();
    }
  });
  return s;
}

SimilarityMatrix csls_adjust(const SimilarityMatrix& s, std::size_t delta, std::size_t workers) {
  const auto rows = static_cast<std::size_t>(s.rows());
  const auto cols = static_cast<std::size_t>(s.cols());
  if (delta < 1 || delta > std::min(rows, cols)) {
    throw std::invalid_argument("csls_adjust: delta " + std::to_string(delta) + " outside [1, " +
                                std::to_string(std::min(rows, cols)) + "]");
  }
  std::vector<double> row_mean(rows), col_mean(cols);
  parallel_for(rows, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<float> buffer(cols);
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t j = 0; j < cols; ++j) buffer[j] = s.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      row_mean[i] = top_mean(buffer, delta);
    }
  });
  parallel_for(cols, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<float> buffer(rows);
    for (std::size_t j = begin; j < end; ++j) {
      for (std::size_t i = 0; i < rows; ++i) buffer[i] = s.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      col_mean[j] = top_mean(buffer, delta);
    }
  });

  SimilarityMatrix out{MatrixF(s.rows(), s.cols()), SimilarityMatrix::Kind::kCsls};
  parallel_for(rows, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        const auto r = static_cast<Eigen::Index>(i);
        const auto c = static_cast<Eigen::Index>(j);
        out.values(r, c) = static_cast<float>(2.0 * static_cast<double>(s.values(r, c)) - row_mean[i] - col_mean[j]);
      }
    }
  });
  return out;
}

PseudoLabelSet mutual_nearest_labels(const SimilarityMatrix& s) {
  const auto rows = s.rows();
  const auto cols = s.cols();
  constexpr Eigen::Index kNone = -1;
  constexpr Eigen::Index kTied = -2;

  std::vector<Eigen::Index> row_best(static_cast<std::size_t>(rows), kNone);
  std::vector<Eigen::Index> col_best(static_cast<std::size_t>(cols), kNone);
  std::vector<float> col_value(static_cast<std::size_t>(cols), -std::numeric_limits<float>::infinity());

  for (Eigen::Index i = 0; i < rows; ++i) {
    float best = -std::numeric_limits<float>::infinity();
    Eigen::Index arg = kNone;
    for (Eigen::Index j = 0; j < cols; ++j) {
      const float v = s.values(i, j);
      if (v > best) {
        best = v;
        arg = j;
      } else if (v == best) {
        arg = kTied;
      }
      auto& cv = col_value[static_cast<std::size_t>(j)];
      auto& cb = col_best[static_cast<std::size_t>(j)];
      if (v > cv) {
        cv = v;
        cb = i;
      } else if (v == cv) {
        cb = kTied;
      }
    }
    row_best[static_cast<std::size_t>(i)] = arg;
  }

  PseudoLabelSet labels;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto j = row_best[static_cast<std::size_t>(i)];
    if (j < 0) continue;
    if (col_best[static_cast<std::size_t>(j)] == i) {
      labels.pairs.emplace_back(static_cast<EntityId>(i), static_cast<EntityId>(j));
    }
  }
  return labels;
}

Metrics evaluate(const SimilarityMatrix& s, std::span<const EntityPair> ref_pairs) {
  Metrics m;
  if (ref_pairs.empty()) return m;
  for (const auto& [i, j] : ref_pairs) {
    if (static_cast<Eigen::Index>(i) >= s.rows() || static_cast<Eigen::Index>(j) >= s.cols()) {
      throw std::out_of_range("evaluate: reference pair outside the similarity matrix");
    }
    const auto row = s.values.row(static_cast<Eigen::Index>(i));
    const float truth = row(static_cast<Eigen::Index>(j));
    std::size_t rank = 1;
    for (Eigen::Index c = 0; c < s.cols(); ++c) {
      if (c != static_cast<Eigen::Index>(j) && row(c) >= truth) ++rank;
    }
    if (rank <= 1) m.hits1 += 1.0;
    if (rank <= 10) m.hits10 += 1.0;
    m.mrr += 1.0 / static_cast<double>(rank);
  }
  const auto n = static_cast<double>(ref_pairs.size());
  m.hits1 /= n;
  m.hits10 /= n;
  m.mrr /= n;
  return m;
}

std::vector<ScoredPair> top_alignments(const SimilarityMatrix& s, std::size_t top_n) {
  std::vector<ScoredPair> out;
  const auto keep = std::min<std::size_t>(top_n, static_cast<std::size_t>(s.cols()));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(s.cols()));
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) order[static_cast<std::size_t>(j)] = j;
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      [&](Eigen::Index a, Eigen::Index b) {
                        const float va = s.values(i, a), vb = s.values(i, b);
                        return va != vb ? va > vb : a < b;
                      });
    for (std::size_t k = 0; k < keep; ++k) {
      out.push_back({static_cast<EntityId>(i), static_cast<EntityId>(order[k]), s.values(i, order[k])});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const ScoredPair& a, const ScoredPair& b) { return a.score > b.score; });
  return out;
}

}  // namespace unea
