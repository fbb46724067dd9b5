#include "unea/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "unea/common.hpp"

namespace unea {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw std::invalid_argument("config key '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw std::invalid_argument("config key '" + std::string(key) + "': expected a boolean, got '" + std::string(text) +
                              "'");
}

}  // namespace

void TrainConfig::set(std::string_view key, std::string_view value) {
  if (key == "lambda") lambda = parse_number<double>(key, value);
  else if (key == "tau") tau = parse_number<double>(key, value);
  else if (key == "mu") mu = parse_number<double>(key, value);
  else if (key == "m") refresh_interval = parse_number<std::uint32_t>(key, value);
  else if (key == "depth") depth = parse_number<std::uint32_t>(key, value);
  else if (key == "fanout") fanout = parse_number<std::uint32_t>(key, value);
  else if (key == "delta") delta = parse_number<std::uint32_t>(key, value);
  else if (key == "n_neg") n_neg = parse_number<std::uint32_t>(key, value);
  else if (key == "dim") dim = parse_number<std::uint32_t>(key, value);
  else if (key == "epochs") epochs = parse_number<std::uint32_t>(key, value);
  else if (key == "batch_size") batch_size = parse_number<std::uint32_t>(key, value);
  else if (key == "learning_rate") learning_rate = parse_number<double>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "leaky_slope") leaky_slope = parse_number<double>(key, value);
  else if (key == "neg_edge_ratio") neg_edge_ratio = parse_number<double>(key, value);
  else if (key == "uniform_sampling") ablation.uniform_sampling = parse_bool(key, value);
  else if (key == "plain_gnn_encoder") ablation.plain_gnn_encoder = parse_bool(key, value);
  else if (key == "no_mi") ablation.no_mi = parse_bool(key, value);
  else if (key == "workers") workers = parse_number<std::uint32_t>(key, value);
  else throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid config: " + what); };
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail("lambda must lie in [0, 1]");
  if (!(tau > 0.0)) fail("tau must be positive");
  if (!(mu >= 0.0 && mu <= 1.0)) fail("mu must lie in [0, 1]");
  if (refresh_interval < 1) fail("m must be at least 1");
  if (fanout < 1) fail("fanout must be at least 1");
  if (delta < 1) fail("delta must be at least 1");
  if (n_neg < 1) fail("n_neg must be at least 1");
  if (dim < 1) fail("dim must be at least 1");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) fail("leaky_slope must lie in [0, 1)");
  if (!(neg_edge_ratio >= 0.0)) fail("neg_edge_ratio must be non-negative");
  if (workers < 1) fail("workers must be at least 1");
}

TrainConfig TrainConfig::parse(std::string_view text) {
  TrainConfig config;
  parse_key_values(text, [&](const std::string& key, const std::string& value) { config.set(key, value); });
  return config;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing config file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::string TrainConfig::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "lambda = " << lambda << '\n'
      << "tau = " << tau << '\n'
      << "mu = " << mu << '\n'
      << "m = " << refresh_interval << '\n'
      << "depth = " << depth << '\n'
      << "fanout = " << fanout << '\n'
      << "delta = " << delta << '\n'
      << "n_neg = " << n_neg << '\n'
      << "dim = " << dim << '\n'
      << "epochs = " << epochs << '\n'
      << "batch_size = " << batch_size << '\n'
      << "learning_rate = " << learning_rate << '\n'
      << "seed = " << seed << '\n'
      << "leaky_slope = " << leaky_slope << '\n'
      << "neg_edge_ratio = " << neg_edge_ratio << '\n'
      << "uniform_sampling = " << (ablation.uniform_sampling ? "true" : "false") << '\n'
      << "plain_gnn_encoder = " << (ablation.plain_gnn_encoder ? "true" : "false") << '\n'
      << "no_mi = " << (ablation.no_mi ? "true" : "false") << '\n'
      << "workers = " << workers << '\n';
  return out.str();
}

std::uint64_t TrainConfig::hash() const {
  TrainConfig canonical = *this;
  canonical.workers = 1;
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char c : canonical.to_text()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace unea
