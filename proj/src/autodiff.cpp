#include "unea/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "unea/relation_geometry.hpp"

namespace unea::ad {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

ParamId Tape::bind(const Matrix& value, Matrix* grad) {
  if (grad != nullptr && (grad->rows() != value.rows() || grad->cols() != value.cols())) {
    throw std::invalid_argument("Tape::bind: gradient shape mismatch");
  }
  params_.push_back({&value, grad});
  return static_cast<ParamId>(params_.size() - 1);
}

void Tape::clear() {
  nodes_.clear();
  args_.clear();
  values_.clear();
  grads_.clear();
}

void Tape::reset() {
  clear();
  params_.clear();
}

Var Tape::push(Node node) {
  node.offset = values_.size();
  values_.resize(values_.size() + node.size);
  nodes_.push_back(node);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::row(ParamId param, Eigen::Index r) {
  const auto& m = *params_.at(param).value;
  return segment(param, r, 0, m.cols());
}

Var Tape::segment(ParamId param, Eigen::Index r, Eigen::Index begin, Eigen::Index length) {
  const auto& m = *params_.at(param).value;
  require(r >= 0 && r < m.rows() && begin >= 0 && begin + length <= m.cols(), "Tape::segment: out of range");
  Node node{Op::kRow, static_cast<std::uint32_t>(length), 0};
  node.param = param;
  node.row = r;
  node.col = begin;
  const Var v = push(node);
  std::copy_n(m.row(r).data() + begin, length, val(v.id));
  return v;
}

Var Tape::input(std::span<const double> values) {
  const Var v = push(Node{Op::kInput, static_cast<std::uint32_t>(values.size()), 0});
  std::copy(values.begin(), values.end(), val(v.id));
  return v;
}

Var Tape::scalar(double value) { return input(std::span<const double>(&value, 1)); }

Var Tape::add(Var a, Var b) {
  require(size_of(a) == size_of(b), "Tape::add: size mismatch");
  Node node{Op::kAdd, size_of(a), 0};
  node.a = a.id;
  node.b = b.id;
  const Var v = push(node);
  const double* x = val(a.id);
  const double* y = val(b.id);
  double* out = val(v.id);
  for (std::uint32_t i = 0; i < node.size; ++i) out[i] = x[i] + y[i];
  return v;
}

Var Tape::scale(Var a, double factor) {
  Node node{Op::kScale, size_of(a), 0};
  node.a = a.id;
  node.aux = factor;
  const Var v = push(node);
  const double* x = val(a.id);
  double* out = val(v.id);
  for (std::uint32_t i = 0; i < node.size; ++i) out[i] = factor * x[i];
  return v;
}

Var Tape::hadamard(Var a, Var b) {
  require(size_of(a) == size_of(b), "Tape::hadamard: size mismatch");
  Node node{Op::kHadamard, size_of(a), 0};
  node.a = a.id;
  node.b = b.id;
  const Var v = push(node);
  const double* x = val(a.id);
  const double* y = val(b.id);
  double* out = val(v.id);
  for (std::uint32_t i = 0; i < node.size; ++i) out[i] = x[i] * y[i];
  return v;
}

Var Tape::dot(Var a, Var b) {
  require(size_of(a) == size_of(b), "Tape::dot: size mismatch");
  Node node{Op::kDot, 1, 0};
  node.a = a.id;
  node.b = b.id;
  const Var v = push(node);
  *val(v.id) = unea::dot({val(a.id), size_of(a)}, {val(b.id), size_of(b)});
  return v;
}

Var Tape::normalize(Var a) {
  Node node{Op::kNormalize, size_of(a), 0};
  node.a = a.id;
  const double n = unea::norm({val(a.id), size_of(a)});
  if (!(n > 0.0)) throw std::domain_error("Tape::normalize: zero vector");
  node.aux = n;
  const Var v = push(node);
  const double* x = val(a.id);
  double* out = val(v.id);
  for (std::uint32_t i = 0; i < node.size; ++i) out[i] = x[i] / n;
  return v;
}

Var Tape::householder(Var r, Var x) {
  require(size_of(r) == size_of(x), "Tape::householder: size mismatch");
  Node node{Op::kHouseholder, size_of(x), 0};
  node.a = r.id;
  node.b = x.id;
  const Var v = push(node);
  const std::size_t d = node.size;
  householder_apply({val(r.id), d}, {val(x.id), d}, {val(v.id), d});
  return v;
}

Var Tape::leaky_relu(Var a, double slope) {
  Node node{Op::kLeakyRelu, size_of(a), 0};
  node.a = a.id;
  node.aux = slope;
  const Var v = push(node);
  const double* x = val(a.id);
  double* out = val(v.id);
  for (std::uint32_t i = 0; i < node.size; ++i) out[i] = (x[i] > 0.0 ? 1.0 : slope) * x[i];
  return v;
}

Var Tape::stack(std::span<const Var> scalars) {
  Node node{Op::kStack, static_cast<std::uint32_t>(scalars.size()), 0};
  node.args_begin = static_cast<std::uint32_t>(args_.size());
  node.args_count = node.size;
  for (const Var s : scalars) {
    require(size_of(s) == 1, "Tape::stack: expects scalars");
    args_.push_back(s.id);
  }
  const Var v = push(node);
  double* out = val(v.id);
  for (std::size_t i = 0; i < scalars.size(); ++i) out[i] = *val(scalars[i].id);
  return v;
}

Var Tape::softmax(Var a) {
  Node node{Op::kSoftmax, size_of(a), 0};
  node.a = a.id;
  const Var v = push(node);
  const double* x = val(a.id);
  double* out = val(v.id);
  const double peak = *std::max_element(x, x + node.size);
  double total = 0.0;
  for (std::uint32_t i = 0; i < node.size; ++i) total += out[i] = std::exp(x[i] - peak);
  for (std::uint32_t i = 0; i < node.size; ++i) out[i] /= total;
  return v;
}

Var Tape::weighted_sum(Var weights, std::span<const Var> vectors) {
  require(size_of(weights) == vectors.size() && !vectors.empty(), "Tape::weighted_sum: arity mismatch");
  Node node{Op::kWeightedSum, size_of(vectors[0]), 0};
  node.a = weights.id;
  node.args_begin = static_cast<std::uint32_t>(args_.size());
  node.args_count = static_cast<std::uint32_t>(vectors.size());
  for (const Var x : vectors) {
    require(size_of(x) == node.size, "Tape::weighted_sum: size mismatch");
    args_.push_back(x.id);
  }
  const Var v = push(node);
  double* out = val(v.id);
  const double* w = val(weights.id);
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    const double* x = val(vectors[k].id);
    for (std::uint32_t i = 0; i < node.size; ++i) out[i] += w[k] * x[i];
  }
  return v;
}

Var Tape::vecmat(Var x, ParamId matrix) {
  const auto& m = *params_.at(matrix).value;
  require(static_cast<Eigen::Index>(size_of(x)) == m.rows(), "Tape::vecmat: size mismatch");
  Node node{Op::kVecMat, static_cast<std::uint32_t>(m.cols()), 0};
  node.a = x.id;
  node.param = matrix;
  const Var v = push(node);
  Eigen::Map<const Eigen::RowVectorXd> in(val(x.id), m.rows());
  Eigen::Map<Eigen::RowVectorXd> out(val(v.id), m.cols());
  out.noalias() = in * m;
  return v;
}

Var Tape::sum(std::span<const Var> scalars, double factor) {
  Node node{Op::kSum, 1, 0};
  node.aux = factor;
  node.args_begin = static_cast<std::uint32_t>(args_.size());
  node.args_count = static_cast<std::uint32_t>(scalars.size());
  double total = 0.0;
  for (const Var s : scalars) {
    require(size_of(s) == 1, "Tape::sum: expects scalars");
    args_.push_back(s.id);
    total += *val(s.id);
  }
  const Var v = push(node);
  *val(v.id) = factor * total;
  return v;
}

Var Tape::info_nce(Var positive, std::span<const Var> negatives, double tau) {
  require(tau > 0.0, "Tape::info_nce: tau must be positive");
  Node node{Op::kInfoNce, 1, 0};
  node.a = positive.id;
  node.aux = tau;
  node.args_begin = static_cast<std::uint32_t>(args_.size());
  node.args_count = static_cast<std::uint32_t>(negatives.size());
  const double pos = *val(positive.id) / tau;
  double peak = pos;
  for (const Var n : negatives) {
    require(size_of(n) == 1, "Tape::info_nce: expects scalars");
    args_.push_back(n.id);
    peak = std::max(peak, *val(n.id) / tau);
  }
  double total = std::exp(pos - peak);
  for (const Var n : negatives) total += std::exp(*val(n.id) / tau - peak);
  node.aux2 = peak + std::log(total);
  const Var v = push(node);
  // log-sum-exp minus the positive term; clamp tiny negative rounding.
  *val(v.id) = std::max(0.0, node.aux2 - pos);
  return v;
}

Var Tape::bce_with_logit(Var logit, double target, double eps) {
  require(size_of(logit) == 1, "Tape::bce_with_logit: expects a scalar");
  Node node{Op::kBce, 1, 0};
  node.a = logit.id;
  node.aux = target;
  const double s = *val(logit.id);
  const double raw = 1.0 / (1.0 + std::exp(-s));
  const double w = std::clamp(raw, eps, 1.0 - eps);
  node.aux2 = (raw == w) ? w : -1.0;  // -1 marks a clamped probability: zero gradient
  const Var v = push(node);
  *val(v.id) = -(target * std::log(w) + (1.0 - target) * std::log(1.0 - w));
  return v;
}

std::span<const double> Tape::value(Var v) const {
  const auto& node = nodes_.at(v.id);
  return {values_.data() + node.offset, node.size};
}

std::span<const double> Tape::grad(Var v) const {
  const auto& node = nodes_.at(v.id);
  if (grads_.size() < values_.size()) throw std::logic_error("Tape::grad: backward() has not run");
  return {grads_.data() + node.offset, node.size};
}

void Tape::backward(Var output) {
  require(size_of(output) == 1, "Tape::backward: output must be scalar without an explicit seed");
  const double one = 1.0;
  backward(output, std::span<const double>(&one, 1));
}

void Tape::backward(Var output, std::span<const double> seed) {
  require(seed.size() == size_of(output), "Tape::backward: seed size mismatch");
  grads_.assign(values_.size(), 0.0);
  std::copy(seed.begin(), seed.end(), grd(output.id));
  for (std::uint32_t id = output.id + 1; id-- > 0;) backward_node(id);
}

void Tape::backward_node(std::uint32_t id) {
  const Node& node = nodes_[id];
  const std::uint32_t n = node.size;
  const double* g = grd(id);
  const double* y = val(id);

  switch (node.op) {
    case Op::kRow: {
      Matrix* target = params_[node.param].grad;
      if (target == nullptr) return;
      double* dst = target->row(node.row).data() + node.col;
      for (std::uint32_t i = 0; i < n; ++i) dst[i] += g[i];
      return;
    }
    case Op::kInput:
      return;
    case Op::kAdd: {
      double* ga = grd(node.a);
      double* gb = grd(node.b);
      for (std::uint32_t i = 0; i < n; ++i) ga[i] += g[i];
      for (std::uint32_t i = 0; i < n; ++i) gb[i] += g[i];
      return;
    }
    case Op::kScale: {
      double* ga = grd(node.a);
      for (std::uint32_t i = 0; i < n; ++i) ga[i] += node.aux * g[i];
      return;
    }
    case Op::kHadamard: {
      const double* x = val(node.a);
      const double* z = val(node.b);
      double* ga = grd(node.a);
      double* gb = grd(node.b);
      for (std::uint32_t i = 0; i < n; ++i) {
        ga[i] += g[i] * z[i];
        gb[i] += g[i] * x[i];
      }
      return;
    }
    case Op::kDot: {
      const std::uint32_t m = nodes_[node.a].size;
      const double* x = val(node.a);
      const double* z = val(node.b);
      const double s = g[0];
      if (s == 0.0) return;
      double* ga = grd(node.a);
      for (std::uint32_t i = 0; i < m; ++i) ga[i] += s * z[i];
      double* gb = grd(node.b);
      for (std::uint32_t i = 0; i < m; ++i) gb[i] += s * x[i];
      return;
    }
    case Op::kNormalize: {
      double* ga = grd(node.a);
      const double proj = unea::dot({y, n}, {g, n});
      for (std::uint32_t i = 0; i < n; ++i) ga[i] += (g[i] - y[i] * proj) / node.aux;
      return;
    }
    case Op::kHouseholder: {
      const double* r = val(node.a);
      const double* x = val(node.b);
      double* gr = grd(node.a);
      double* gx = grd(node.b);
      const double rx = unea::dot({r, n}, {x, n});
      const double rg = unea::dot({r, n}, {g, n});
      for (std::uint32_t i = 0; i < n; ++i) {
        gx[i] += g[i] - 2.0 * rg * r[i];
        gr[i] -= 2.0 * (rx * g[i] + rg * x[i]);
      }
      return;
    }
    case Op::kLeakyRelu: {
      const double* x = val(node.a);
      double* ga = grd(node.a);
      for (std::uint32_t i = 0; i < n; ++i) ga[i] += (x[i] > 0.0 ? 1.0 : node.aux) * g[i];
      return;
    }
    case Op::kStack: {
      for (std::uint32_t k = 0; k < node.args_count; ++k) *grd(args_[node.args_begin + k]) += g[k];
      return;
    }
    case Op::kSoftmax: {
      double* ga = grd(node.a);
      const double proj = unea::dot({y, n}, {g, n});
      for (std::uint32_t i = 0; i < n; ++i) ga[i] += y[i] * (g[i] - proj);
      return;
    }
    case Op::kWeightedSum: {
      const double* w = val(node.a);
      double* gw = grd(node.a);
      for (std::uint32_t k = 0; k < node.args_count; ++k) {
        const std::uint32_t arg = args_[node.args_begin + k];
        const double* x = val(arg);
        double* gx = grd(arg);
        gw[k] += unea::dot({x, n}, {g, n});
        for (std::uint32_t i = 0; i < n; ++i) gx[i] += w[k] * g[i];
      }
      return;
    }
    case Op::kVecMat: {
      const auto& binding = params_[node.param];
      const auto& m = *binding.value;
      Eigen::Map<const Eigen::RowVectorXd> dy(g, m.cols());
      Eigen::Map<const Eigen::RowVectorXd> x(val(node.a), m.rows());
      if (nodes_[node.a].op != Op::kInput) {
        Eigen::Map<Eigen::RowVectorXd> dx(grd(node.a), m.rows());
        dx.noalias() += dy * m.transpose();
      }
      if (binding.grad != nullptr) binding.grad->noalias() += x.transpose() * dy;
      return;
    }
    case Op::kSum: {
      for (std::uint32_t k = 0; k < node.args_count; ++k) *grd(args_[node.args_begin + k]) += node.aux * g[0];
      return;
    }
    case Op::kInfoNce: {
      const double tau = node.aux;
      const double log_total = node.aux2;
      const double pos = *val(node.a) / tau;
      *grd(node.a) += g[0] * (std::exp(pos - log_total) - 1.0) / tau;
      for (std::uint32_t k = 0; k < node.args_count; ++k) {
        const std::uint32_t arg = args_[node.args_begin + k];
        *grd(arg) += g[0] * std::exp(*val(arg) / tau - log_total) / tau;
      }
      return;
    }
    case Op::kBce: {
      if (node.aux2 < 0.0) return;
      *grd(node.a) += g[0] * (node.aux2 - node.aux);
      return;
    }
  }
}

}  // namespace unea::ad
