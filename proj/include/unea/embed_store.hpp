#pragma once

#include <array>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "unea/common.hpp"

namespace unea {

// Name features of entities or relations, one row per dense id.
struct FeatureTable {
  Matrix rows;

  std::size_t count() const { return static_cast<std::size_t>(rows.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(rows.cols()); }
};

// UNEA-EMB v1: "UNEA-EMB 1 <count> <dim>\n" then count*dim little-endian float32, row-major.
MatrixF read_emb(const std::filesystem::path& path);
void write_emb(const std::filesystem::path& path, const MatrixF& rows);
void write_emb(const std::filesystem::path& path, const Matrix& rows);

// Throws DataError on a bad header, a count mismatch or a non-finite value.
FeatureTable load_features(const std::filesystem::path& emb_path, std::size_t expected_count);
// Expected count is the number of non-empty lines in the ids file.
FeatureTable load_features(const std::filesystem::path& emb_path, const std::filesystem::path& ids_path);

// D_f x d map. Columns are orthonormal when D_f >= d, rows otherwise.
Matrix orthonormal_projection(std::size_t feature_dim, std::size_t dim, std::mt19937_64& rng);

// Row i = normalize(f_i * projection). Throws NumericError on a zero-norm projected row.
Matrix init_embeddings(const FeatureTable& features, const Matrix& projection);

// frozen <- mu * frozen + (1 - mu) * live.
void momentum_update(Matrix& frozen, const Matrix& live, double mu);

// Xavier/Glorot uniform initialisation for a fan_in x fan_out tensor.
Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, double fan_in, double fan_out,
                      std::mt19937_64& rng);

// Every trainable tensor plus the frozen copies the sampler reads.
struct EmbeddingTables {
  std::array<Matrix, 2> entities;   // n_side x d
  std::array<Matrix, 2> relations;  // 2 * relation_count x d, stored unnormalised
  Matrix projection;                // D_f x d
  Matrix attention;                 // 1 x 3d
  Matrix edge_scoring;              // d x d

  std::array<Matrix, 2> frozen_entities;
  std::array<Matrix, 2> frozen_relations;

  std::size_t dim() const { return static_cast<std::size_t>(projection.cols()); }
};

// Named view over the trainable tensors, in a fixed order.
struct ParameterRef {
  std::string name;
  Matrix* value;
};
std::vector<ParameterRef> trainable_parameters(EmbeddingTables& tables);

}  // namespace unea
