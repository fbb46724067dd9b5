#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <stdexcept>
#include <string_view>

namespace unea {

struct AblationFlags {
  bool uniform_sampling = false;   // uniform child distribution in the sampler
  bool plain_gnn_encoder = false;  // one-hop full-neighbourhood attention instead of sampled trees
  bool no_mi = false;              // drop the mutual-information terms (lambda = 1)
};

// Every hyperparameter of a training run. Keys of the flat config file match the
// field names, except refresh_interval which is spelled `m`.
struct TrainConfig {
  double lambda = 0.4;
  double tau = 0.08;
  double mu = 0.9;
  std::uint32_t refresh_interval = 10;
  std::uint32_t depth = 2;
  std::uint32_t fanout = 8;
  std::uint32_t delta = 10;
  std::uint32_t n_neg = 128;
  std::uint32_t dim = 300;
  std::uint32_t epochs = 300;
  std::uint32_t batch_size = 128;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  double leaky_slope = 0.01;
  double neg_edge_ratio = 1.0;
  AblationFlags ablation;
  std::uint32_t workers = 1;

  double effective_lambda() const { return ablation.no_mi ? 1.0 : lambda; }

  // Throws std::invalid_argument on an unknown key or unparsable value.
  void set(std::string_view key, std::string_view value);
  // Throws std::invalid_argument when a field is out of range.
  void validate() const;

  // "key = value" lines; '#' starts a comment.
  static TrainConfig parse(std::string_view text);
  static TrainConfig load(const std::filesystem::path& path);
  std::string to_text() const;
  // FNV-1a of the canonical text, excluding the worker count.
  std::uint64_t hash() const;
};

// Parses "key = value" lines into fn(key, value) calls.
template <typename Fn>
void parse_key_values(std::string_view text, Fn&& fn);

std::string trim(std::string_view s);

template <typename Fn>
void parse_key_values(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    auto line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    fn(trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)));
  }
}

}  // namespace unea
