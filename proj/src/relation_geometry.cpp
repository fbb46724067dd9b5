#include "unea/relation_geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace unea {

double dot(std::span<const double> a, std::span<const double> b) {
  // Four independent partial sums; lets the compiler keep two SIMD lanes busy.
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s2) + (s1 + s3);
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

UnitRelationVector UnitRelationVector::from(std::span<const double> raw) {
  const double n = norm(raw);
  if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument("cannot normalise a zero relation vector");
  UnitRelationVector unit;
  unit.values_.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) unit.values_[i] = raw[i] / n;
  return unit;
}

void householder_apply(std::span<const double> r, std::span<const double> x, std::span<double> out,
                       Transpose /*transposed*/) {
  if (r.size() != x.size() || out.size() != x.size()) {
    throw std::invalid_argument("householder_apply: dimension mismatch (" + std::to_string(r.size()) + " vs " +
                                std::to_string(x.size()) + ")");
  }
  const double projection = 2.0 * dot(r, x);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - projection * r[i];
}

std::vector<double> householder_apply(const UnitRelationVector& r, std::span<const double> x,
                                      Transpose transposed) {
  std::vector<double> out(x.size());
  householder_apply(r.values(), x, out, transposed);
  return out;
}

UnitRelationVector compose_relation(std::span<const double> r_l, std::span<const double> r_k) {
  if (r_l.size() != r_k.size()) throw std::invalid_argument("compose_relation: dimension mismatch");
  std::vector<double> product(r_l.size());
  for (std::size_t i = 0; i < product.size(); ++i) product[i] = r_l[i] * r_k[i];
  if (norm(product) < kCompositionFloor) return UnitRelationVector::from(r_k);
  return UnitRelationVector::from(product);
}

}  // namespace unea
