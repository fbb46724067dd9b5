#include <doctest.h>

#include "../support/oracles.hpp"
#include "unea/alignment.hpp"

using namespace unea;

namespace {

SimilarityMatrix wrap(MatrixF m) { return SimilarityMatrix{std::move(m), SimilarityMatrix::Kind::kRawCosine}; }

MatrixF two_by_two() {
  MatrixF s(2, 2);
  s << 0.9f, 0.5f, 0.6f, 0.8f;
  return s;
}

}  // namespace

TEST_CASE("cosine similarity basics") {
  Matrix a(2, 2), b(2, 2);
  a << 1, 0, 3, 4;
  b << 0, 1, 6, 8;
  const auto s = similarity_matrix(a, b);
  CHECK(s.values(0, 0) == 0.0f);
  CHECK(s.values(1, 1) == doctest::Approx(1.0));
  CHECK_THROWS_AS(similarity_matrix(Matrix::Zero(1, 2), b), std::invalid_argument);
}

TEST_CASE("cosine similarity matches a per-pair loop") {
  const Matrix a = Matrix::Random(13, 6), b = Matrix::Random(300, 6);
  const auto s = similarity_matrix(a, b, 3);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      const double c = a.row(i).dot(b.row(j)) / (a.row(i).norm() * b.row(j).norm());
      CHECK(std::abs(s.values(i, j) - c) < 1e-6);
    }
  }
}

TEST_CASE("csls hand example") {
  const auto t = csls_adjust(wrap(two_by_two()), 1);
  CHECK(t.kind == SimilarityMatrix::Kind::kCsls);
  CHECK(t.values(0, 0) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(t.values(0, 1) == doctest::Approx(-0.7).epsilon(1e-6));
  CHECK(t.values(1, 0) == doctest::Approx(-0.5).epsilon(1e-6));
  CHECK(t.values(1, 1) == doctest::Approx(0.0).epsilon(1e-6));
  const auto labels = mutual_nearest_labels(t);
  CHECK(labels.pairs == std::vector<EntityPair>{{0, 0}, {1, 1}});
}

TEST_CASE("constant matrix cancels under csls") {
  const auto t = csls_adjust(wrap(MatrixF::Constant(4, 6, 0.37f)), 3);
  CHECK(t.values.cwiseAbs().maxCoeff() < 1e-7f);
}

TEST_CASE("csls delta must fit the matrix") {
  CHECK_THROWS_AS(csls_adjust(wrap(two_by_two()), 0), std::invalid_argument);
  CHECK_THROWS_AS(csls_adjust(wrap(two_by_two()), 3), std::invalid_argument);
}

TEST_CASE("csls equals the brute-force oracle") {
  std::mt19937_64 rng(5);
  for (const std::size_t delta : {1u, 5u, 10u}) {
    const MatrixF s = MatrixF::Random(20, 20);
    const auto got = csls_adjust(wrap(s), delta, 2);
    CHECK(got.values == oracle::csls(s, delta));
  }
}

TEST_CASE("ties disqualify mutual nearest pairs") {
  MatrixF s(1, 2);
  s << 0.5f, 0.5f;
  CHECK(mutual_nearest_labels(wrap(s)).empty());
  MatrixF c(2, 1);
  c << 0.5f, 0.5f;
  CHECK(mutual_nearest_labels(wrap(c)).empty());
}

TEST_CASE("mutual nearest matches the double-argmax oracle") {
  for (int t = 0; t < 20; ++t) {
    MatrixF s = MatrixF::Random(50, 50);
    if (t % 2 == 1) s = (s * 4).array().round() / 4;  // coarse values force ties
    CHECK(mutual_nearest_labels(wrap(s)).pairs == oracle::mutual_nearest(s));
  }
}

TEST_CASE("evaluation") {
  SUBCASE("diagonal dominant") {
    MatrixF s = MatrixF::Constant(12, 12, 0.1f);
    s.diagonal().setConstant(0.9f);
    std::vector<EntityPair> refs;
    for (EntityId i = 0; i < 12; ++i) refs.emplace_back(i, i);
    const auto m = evaluate(wrap(s), refs);
    CHECK(m.hits1 == 1.0);
    CHECK(m.hits10 == 1.0);
    CHECK(m.mrr == 1.0);
  }
  SUBCASE("second place counts half") {
    MatrixF s(1, 3);
    s << 0.2f, 0.9f, 0.5f;
    const std::vector<EntityPair> refs{{0, 2}};
    const auto m = evaluate(wrap(s), refs);
    CHECK(m.hits1 == 0.0);
    CHECK(m.hits10 == 1.0);
    CHECK(m.mrr == 0.5);
  }
  SUBCASE("ties rank the true match last") {
    MatrixF s(1, 3);
    s << 0.5f, 0.5f, 0.5f;
    const std::vector<EntityPair> refs{{0, 0}};
    CHECK(evaluate(wrap(s), refs).mrr == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("random matrices match a full sort") {
    std::mt19937_64 rng(9);
    for (int t = 0; t < 20; ++t) {
      MatrixF s = MatrixF::Random(30, 40);
      if (t % 3 == 0) s = (s * 5).array().round() / 5;
      std::vector<EntityPair> refs;
      for (EntityId i = 0; i < 30; ++i) refs.emplace_back(i, static_cast<EntityId>(rng() % 40));
      const auto m = evaluate(wrap(s), refs);
      const auto o = oracle::rank_by_sort(s, refs);
      CHECK(m.hits1 == o.hits1);
      CHECK(m.hits10 == o.hits10);
      CHECK(m.mrr == doctest::Approx(o.mrr).epsilon(1e-12));
    }
  }
}

TEST_CASE("top alignments are sorted by score") {
  MatrixF s(2, 3);
  s << 0.1f, 0.7f, 0.3f, 0.9f, 0.2f, 0.8f;
  const auto top = top_alignments(wrap(s), 2);
  REQUIRE(top.size() == 4);
  CHECK(top[0].first == 1);
  CHECK(top[0].second == 0);
  for (std::size_t i = 1; i < top.size(); ++i) CHECK(top[i - 1].score >= top[i].score);
}
