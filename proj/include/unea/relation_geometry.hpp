#pragma once

#include <span>
#include <vector>

namespace unea {

// A relation direction of unit L2 norm; W = I - 2 r r^T is then orthogonal.
class UnitRelationVector {
 public:
  UnitRelationVector() = default;

  // Normalises raw. Throws std::invalid_argument on a zero vector.
  static UnitRelationVector from(std::span<const double> raw);

  std::span<const double> values() const { return values_; }
  std::size_t dim() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  std::vector<double> values_;
};

enum class Transpose : bool { kNo = false, kYes = true };

// out = x - 2 r (r . x). The reflection is symmetric, so the transposed form is identical.
// out may alias x. Throws std::invalid_argument on a dimension mismatch.
void householder_apply(std::span<const double> r, std::span<const double> x, std::span<double> out,
                       Transpose transposed = Transpose::kNo);
std::vector<double> householder_apply(const UnitRelationVector& r, std::span<const double> x,
                                      Transpose transposed = Transpose::kNo);

// Below this norm a Hadamard composition is treated as degenerate.
inline constexpr double kCompositionFloor = 1e-8;

// normalize(r_l * r_k) elementwise; falls back to normalize(r_k) when the product vanishes.
UnitRelationVector compose_relation(std::span<const double> r_l, std::span<const double> r_k);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

}  // namespace unea
