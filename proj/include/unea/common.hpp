#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace unea {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

// Row-major so that every row is a contiguous span.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class KgSide : std::uint8_t { kFirst = 0, kSecond = 1 };

inline constexpr std::size_t index_of(KgSide side) { return static_cast<std::size_t>(side); }

// Malformed or inconsistent input files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or degenerate numerics during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace unea
