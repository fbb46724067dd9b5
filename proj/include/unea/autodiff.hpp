#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "unea/common.hpp"

namespace unea::ad {

// Handle to a node on a Tape. Scalars are nodes of size one.
struct Var {
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t id = kNone;

  bool valid() const { return id != kNone; }
};

using ParamId = std::uint32_t;

// Minimal reverse-mode tape over dense vectors. Values are computed eagerly as
// nodes are recorded; backward() walks the nodes in reverse creation order and
// accumulates parameter gradients into the matrices registered with bind().
//
// A tape is single-threaded. Parallel callers give each worker its own tape and
// its own gradient accumulators.
class Tape {
 public:
  // grad may be null, in which case the parameter is treated as a constant.
  ParamId bind(const Matrix& value, Matrix* grad);
  // Drops every node but keeps parameter bindings and arena capacity.
  void clear();
  // Drops nodes and bindings.
  void reset();

  Var row(ParamId param, Eigen::Index row);
  Var segment(ParamId param, Eigen::Index row, Eigen::Index begin, Eigen::Index length);
  Var input(std::span<const double> values);
  Var scalar(double value);

  Var add(Var a, Var b);
  Var scale(Var v, double factor);
  Var hadamard(Var a, Var b);
  Var dot(Var a, Var b);
  Var normalize(Var v);
  // x - 2 r (r . x); r is expected to be unit norm.
  Var householder(Var r, Var x);
  Var leaky_relu(Var v, double slope);
  // Scalars -> one vector.
  Var stack(std::span<const Var> scalars);
  Var softmax(Var v);
  // sum_i weights[i] * vectors[i]
  Var weighted_sum(Var weights, std::span<const Var> vectors);
  // y = x^T M for a bound parameter M.
  Var vecmat(Var x, ParamId matrix);
  Var sum(std::span<const Var> scalars, double factor = 1.0);
  // -log( exp(pos/tau) / (exp(pos/tau) + sum exp(neg/tau)) ), evaluated as a log-sum-exp.
  Var info_nce(Var positive, std::span<const Var> negatives, double tau);
  // Binary cross-entropy of sigmoid(logit) against target, probability clamped to [eps, 1 - eps].
  Var bce_with_logit(Var logit, double target, double eps);

  std::span<const double> value(Var v) const;
  double scalar_value(Var v) const { return value(v)[0]; }
  std::span<const double> grad(Var v) const;

  void backward(Var output);
  void backward(Var output, std::span<const double> seed);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kRow,
    kInput,
    kAdd,
    kScale,
    kHadamard,
    kDot,
    kNormalize,
    kHouseholder,
    kLeakyRelu,
    kStack,
    kSoftmax,
    kWeightedSum,
    kVecMat,
    kSum,
    kInfoNce,
    kBce,
  };

  struct Node {
    Op op;
    std::uint32_t size;
    std::size_t offset;
    std::uint32_t a = Var::kNone;
    std::uint32_t b = Var::kNone;
    std::uint32_t args_begin = 0;
    std::uint32_t args_count = 0;
    ParamId param = 0;
    Eigen::Index row = 0;
    Eigen::Index col = 0;
    double aux = 0.0;
    double aux2 = 0.0;
  };

  struct Binding {
    const Matrix* value;
    Matrix* grad;
  };

  Var push(Node node);
  double* val(std::uint32_t id) { return values_.data() + nodes_[id].offset; }
  const double* val(std::uint32_t id) const { return values_.data() + nodes_[id].offset; }
  double* grd(std::uint32_t id) { return grads_.data() + nodes_[id].offset; }
  std::uint32_t size_of(Var v) const { return nodes_.at(v.id).size; }
  void backward_node(std::uint32_t id);

  std::vector<Binding> params_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> args_;
  std::vector<double> values_;
  std::vector<double> grads_;
};

}  // namespace unea::ad
