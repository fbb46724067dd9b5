#include "unea/embed_store.hpp"

#include <Eigen/QR>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace unea {

namespace {

constexpr const char* kMagic = "UNEA-EMB";

std::uint32_t to_little(std::uint32_t bits) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) | (bits >> 24);
  }
  return bits;
}

}  // namespace

MatrixF read_emb(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing file: " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw DataError(path.string() + ": empty file");

  std::istringstream fields(header);
  std::string magic, trailing;
  int version = 0;
  long long count = -1, dim = -1;
  fields >> magic >> version >> count >> dim;
  if (fields.fail() || magic != kMagic || (fields >> trailing)) {
    throw DataError(path.string() + ": bad magic header '" + header + "'");
  }
  if (version != 1) throw DataError(path.string() + ": unsupported UNEA-EMB version " + std::to_string(version));
  if (count < 0 || dim <= 0) throw DataError(path.string() + ": invalid shape in header");

  MatrixF rows(count, dim);
  const auto total = static_cast<std::size_t>(count) * static_cast<std::size_t>(dim);
  std::vector<std::uint32_t> raw(total);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(total * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != total * sizeof(float)) {
    throw DataError(path.string() + ": payload shorter than " + std::to_string(count) + "x" + std::to_string(dim));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(path.string() + ": trailing bytes after payload");
  for (std::size_t i = 0; i < total; ++i) {
    rows.data()[i] = std::bit_cast<float>(to_little(raw[i]));
  }
  return rows;
}

void write_emb(const std::filesystem::path& path, const MatrixF& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << kMagic << " 1 " << rows.rows() << ' ' << rows.cols() << '\n';
  std::vector<std::uint32_t> raw(static_cast<std::size_t>(rows.size()));
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = to_little(std::bit_cast<std::uint32_t>(rows.data()[i]));
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (!out) throw DataError("write failed: " + path.string());
}

void write_emb(const std::filesystem::path& path, const Matrix& rows) {
  write_emb(path, MatrixF(rows.cast<float>()));
}

FeatureTable load_features(const std::filesystem::path& emb_path, std::size_t expected_count) {
  const MatrixF raw = read_emb(emb_path);
  if (static_cast<std::size_t>(raw.rows()) != expected_count) {
    throw DataError(emb_path.string() + ": has " + std::to_string(raw.rows()) + " rows, expected " +
                    std::to_string(expected_count));
  }
  if (!raw.allFinite()) throw DataError(emb_path.string() + ": non-finite value");
  return FeatureTable{raw.cast<double>()};
}

FeatureTable load_features(const std::filesystem::path& emb_path, const std::filesystem::path& ids_path) {
  std::ifstream in(ids_path);
  if (!in) throw DataError("missing file: " + ids_path.string());
  std::size_t count = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line != "\r") ++count;
  }
  return load_features(emb_path, count);
}

Matrix orthonormal_projection(std::size_t feature_dim, std::size_t dim, std::mt19937_64& rng) {
  const auto tall = static_cast<Eigen::Index>(std::max(feature_dim, dim));
  const auto wide = static_cast<Eigen::Index>(std::min(feature_dim, dim));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd g(tall, wide);
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = gauss(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(tall, wide);
  // Fix column signs so the result does not depend on the QR sign convention.
  const Eigen::MatrixXd r = qr.matrixQR().topRows(wide).template triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < wide; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  if (feature_dim >= dim) return q;
  return q.transpose();
}

Matrix init_embeddings(const FeatureTable& features, const Matrix& projection) {
  if (static_cast<std::size_t>(projection.rows()) != features.dim()) {
    throw std::invalid_argument("projection has " + std::to_string(projection.rows()) +
                                " rows, features have dim " + std::to_string(features.dim()));
  }
  Matrix out = features.rows * projection;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (!(norm > 1e-12) || !std::isfinite(norm)) {
      throw NumericError("zero-norm projected feature at row " + std::to_string(i));
    }
    out.row(i) /= norm;
  }
  return out;
}

void momentum_update(Matrix& frozen, const Matrix& live, double mu) {
  if (frozen.rows() != live.rows() || frozen.cols() != live.cols()) {
    throw std::invalid_argument("momentum_update: shape mismatch");
  }
  if (!(mu >= 0.0 && mu <= 1.0)) throw std::invalid_argument("momentum_update: mu outside [0, 1]");
  if (mu == 1.0) return;
  if (mu == 0.0) {
    frozen = live;
    return;
  }
  frozen = mu * frozen + (1.0 - mu) * live;
}

Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, double fan_in, double fan_out,
                      std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

std::vector<ParameterRef> trainable_parameters(EmbeddingTables& tables) {
  return {
      {"entities_1", &tables.entities[0]},
      {"entities_2", &tables.entities[1]},
      {"relations_1", &tables.relations[0]},
      {"relations_2", &tables.relations[1]},
      {"projection", &tables.projection},
      {"attention", &tables.attention},
      {"edge_scoring", &tables.edge_scoring},
  };
}

}  // namespace unea
