#include <doctest.h>

#include <cmath>
#include <functional>

#include "../support/oracles.hpp"
#include "unea/autodiff.hpp"

using namespace unea;
using ad::Tape;
using ad::Var;

namespace {

// Scalar function of one bound parameter, recorded fresh on every call.
using Builder = std::function<Var(Tape&, ad::ParamId)>;

// Largest relative error between the tape gradient and central differences.
double gradient_error(Matrix param, const Builder& build) {
  Matrix grad = Matrix::Zero(param.rows(), param.cols());
  {
    Tape tape;
    const auto id = tape.bind(param, &grad);
    tape.backward(build(tape, id));
  }
  auto eval = [&](const Matrix& p) {
    Tape tape;
    const auto id = tape.bind(p, nullptr);
    return tape.scalar_value(build(tape, id));
  };
  Matrix numeric(param.rows(), param.cols());
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < param.size(); ++i) {
    Matrix plus = param, minus = param;
    plus.data()[i] += h;
    minus.data()[i] -= h;
    numeric.data()[i] = (eval(plus) - eval(minus)) / (2 * h);
  }
  return (grad - numeric).norm() / std::max(1e-12, numeric.norm());
}

}  // namespace

TEST_CASE("forward values of the basic ops") {
  Tape tape;
  const auto a = tape.input(std::vector<double>{3, 4});
  const auto b = tape.input(std::vector<double>{1, -2});
  CHECK(tape.scalar_value(tape.dot(a, b)) == -5.0);
  const auto n = tape.value(tape.normalize(a));
  CHECK(n[0] == doctest::Approx(0.6));
  const auto l = tape.value(tape.leaky_relu(b, 0.1));
  CHECK(l[1] == doctest::Approx(-0.2));
  const auto h = tape.value(tape.householder(tape.input(std::vector<double>{0, 1}), a));
  CHECK(h[1] == -4.0);
  const auto sm = tape.value(tape.softmax(tape.input(std::vector<double>{0, 0})));
  CHECK(sm[0] == 0.5);
}

TEST_CASE("info_nce is stable for large logits") {
  Tape tape;
  const auto pos = tape.scalar(1.0);
  const std::vector<Var> negs{tape.scalar(0.0)};
  const double v = tape.scalar_value(tape.info_nce(pos, negs, 0.001));
  CHECK(std::isfinite(v));
  CHECK(v < 1e-12);
}

TEST_CASE("normalize rejects a zero vector") {
  Tape tape;
  CHECK_THROWS_AS(tape.normalize(tape.input(std::vector<double>{0, 0})), std::domain_error);
}

TEST_CASE("gradients of composed ops match finite differences") {
  std::mt19937_64 rng(4);
  const Matrix p = Matrix::Random(3, 4);

  SUBCASE("householder, hadamard, leaky relu") {
    CHECK(gradient_error(p, [](Tape& t, ad::ParamId id) {
            const auto r = t.normalize(t.hadamard(t.row(id, 0), t.row(id, 1)));
            const auto y = t.leaky_relu(t.householder(r, t.row(id, 2)), 0.01);
            return t.dot(y, t.add(t.row(id, 0), t.scale(t.row(id, 1), 0.5)));
          }) < 1e-6);
  }
  SUBCASE("softmax-weighted sum") {
    CHECK(gradient_error(p, [](Tape& t, ad::ParamId id) {
            const std::vector<Var> scores{t.dot(t.row(id, 0), t.row(id, 1)), t.dot(t.row(id, 1), t.row(id, 2)),
                                          t.segment(id, 2, 1, 1)};
            const auto w = t.softmax(t.stack(scores));
            const std::vector<Var> vecs{t.row(id, 0), t.row(id, 1), t.row(id, 2)};
            const auto s = t.weighted_sum(w, vecs);
            return t.dot(s, s);
          }) < 1e-6);
  }
  SUBCASE("vecmat, info_nce, bce") {
    CHECK(gradient_error(p, [](Tape& t, ad::ParamId id) {
            const auto x = t.input(std::vector<double>{0.3, -0.2, 0.5});
            const auto y = t.normalize(t.vecmat(x, id));
            const auto z = t.normalize(t.vecmat(t.input(std::vector<double>{-0.1, 0.4, 0.2}), id));
            const std::vector<Var> negs{t.dot(y, t.scale(z, -1.0)), t.scalar(0.1)};
            const std::vector<Var> parts{t.info_nce(t.dot(y, z), negs, 0.5), t.bce_with_logit(t.dot(y, z), 1.0, 1e-7)};
            return t.sum(parts, 0.7);
          }) < 1e-6);
  }
}

TEST_CASE("clamped bce has zero gradient") {
  Matrix p(1, 1);
  p(0, 0) = 40.0;
  Matrix g = Matrix::Zero(1, 1);
  Tape tape;
  const auto id = tape.bind(p, &g);
  const auto loss = tape.bce_with_logit(tape.row(id, 0), 1.0, 1e-7);
  CHECK(tape.scalar_value(loss) == doctest::Approx(-std::log(1 - 1e-7)));
  tape.backward(loss);
  CHECK(g(0, 0) == 0.0);
}

TEST_CASE("seeded backward of a vector output") {
  Matrix p(1, 2);
  p << 1.0, -2.0;
  Matrix g = Matrix::Zero(1, 2);
  Tape tape;
  const auto id = tape.bind(p, &g);
  const auto y = tape.leaky_relu(tape.row(id, 0), 0.5);
  const std::vector<double> seed{2.0, 3.0};
  tape.backward(y, seed);
  CHECK(g(0, 0) == 2.0);
  CHECK(g(0, 1) == 1.5);
}
