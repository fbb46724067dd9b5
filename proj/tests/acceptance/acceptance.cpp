// Acceptance suite. Prints one PASS/FAIL line per criterion; with an argument only
// that criterion runs. Exit status is non-zero when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "../support/oracles.hpp"
#include "unea/alignment.hpp"
#include "unea/relation_geometry.hpp"
#include "unea/synth.hpp"
#include "unea/trainer.hpp"
#include "unea/tree_sampler.hpp"

using namespace unea;

namespace {

// Pinned tolerances and budgets.
constexpr double kOrthoTol = 1e-5;
constexpr double kOrthoBudget = 5.0;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradStep = 1e-6;
constexpr double kGradBudget = 60.0;
constexpr double kSamplerTol = 0.01;
constexpr int kSamplerDraws = 100000;
constexpr double kE2eHits1 = 0.95;
constexpr double kE2eMrr = 0.97;
constexpr double kE2eBudget = 300.0;
constexpr std::uint32_t kBenchEpochs = 100;
constexpr int kAblationSeeds = 5;
constexpr double kAblationSigma = 0.3;
constexpr std::uint32_t kDeterminismEpochs = 30;

struct Outcome {
  bool pass;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

void quiet(std::string_view) {}

std::size_t bench_workers() { return std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, 4); }

Outcome orthogonality() {
  Stopwatch clock;
  std::mt19937_64 rng(101);
  double worst_norm = 0, worst_involution = 0;
  for (const std::size_t d : {4u, 300u}) {
    std::vector<double> once(d), twice(d);
    for (int trial = 0; trial < 1000; ++trial) {
      const auto r = oracle::std_vec(oracle::random_vec(d, rng).normalized());
      const auto x = oracle::std_vec(oracle::random_vec(d, rng));
      householder_apply(r, x, once);
      householder_apply(r, once, twice);
      worst_norm = std::max(worst_norm, std::abs(norm(once) - norm(x)));
      for (std::size_t i = 0; i < d; ++i) worst_involution = std::max(worst_involution, std::abs(twice[i] - x[i]));
    }
  }
  const double t = clock.seconds();
  return {worst_norm <= kOrthoTol && worst_involution <= kOrthoTol && t < kOrthoBudget,
          fmt("max norm drift %.3g, max involution error %.3g, %.2fs", worst_norm, worst_involution, t)};
}

Outcome gradients() {
  Stopwatch clock;
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<EntityId> pick(0, 9);
  std::uniform_int_distribution<RelationId> rel(0, 2);
  auto random_graph = [&] {
    std::vector<Triple> triples;
    for (EntityId e = 0; e + 1 < 10; ++e) triples.push_back({e, rel(rng), e + 1});
    while (triples.size() < 18) {
      const EntityId h = pick(rng), t = pick(rng);
      if (h != t) triples.push_back({h, rel(rng), t});
    }
    return KnowledgeGraph(10, 3, triples);
  };
  KnowledgeGraphPair data{random_graph(), random_graph(), {}};
  FeatureSet features;
  for (auto& f : features.entities) f.rows = Matrix::Random(10, 5);
  for (auto& f : features.relations) f.rows = Matrix::Random(3, 5);

  TrainConfig config;
  config.dim = 6;
  config.depth = 2;
  config.fanout = 2;
  config.delta = 2;
  config.n_neg = 4;
  config.mu = 0.5;
  Trainer trainer(data, features, config, quiet);
  // move the tables off their initial values so every parameter carries signal
  for (const auto& p : trainable_parameters(trainer.tables())) *p.value += 0.3 * Matrix::Random(p.value->rows(), p.value->cols());
  trainer.refresh();

  const std::vector<EntityPair> pairs{{0, 3}, {4, 4}, {7, 1}};
  const BatchPlan plan = trainer.plan_batch(pairs, rng);
  Gradients analytic;
  trainer.batch_loss(plan, &analytic);

  double worst = 0, smallest = 1e300;
  std::string worst_name;
  auto params = trainable_parameters(trainer.tables());
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& value = *params[k].value;
    Matrix numeric(value.rows(), value.cols());
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double saved = value.data()[i];
      value.data()[i] = saved + kGradStep;
      const double up = trainer.batch_loss(plan, nullptr).total;
      value.data()[i] = saved - kGradStep;
      const double down = trainer.batch_loss(plan, nullptr).total;
      value.data()[i] = saved;
      numeric.data()[i] = (up - down) / (2 * kGradStep);
    }
    smallest = std::min(smallest, analytic[k].norm());
    const double scale = std::max({numeric.norm(), analytic[k].norm(), 1e-12});
    const double rel_err = (numeric - analytic[k]).norm() / scale;
    if (rel_err >= worst) {
      worst = rel_err;
      worst_name = params[k].name;
    }
  }
  const double t = clock.seconds();
  // a vanishing gradient would make the comparison vacuous
  return {worst < kGradRelTol && smallest > 1e-6 && t < kGradBudget,
          fmt("worst tensor relative error %.3g, ", worst) + "(" + worst_name + ")" +
              fmt(", smallest gradient norm %.3g, %.2fs", smallest, t)};
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> size(1, 50);
  std::uniform_int_distribution<int> coarse(-3, 3);
  int csls_mismatch = 0, mnn_mismatch = 0, eval_mismatch = 0, checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int rows = size(rng), cols = size(rng);
    MatrixF v(rows, cols);
    // a third of the matrices are coarse so that ties occur
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      v.data()[i] = trial % 3 == 0 ? 0.25f * static_cast<float>(coarse(rng))
                                   : static_cast<float>(std::uniform_real_distribution<double>(-1, 1)(rng));
    }
    const SimilarityMatrix s{v, SimilarityMatrix::Kind::kRawCosine};
    for (const std::size_t delta : {1u, 5u, 10u}) {
      if (delta > static_cast<std::size_t>(std::min(rows, cols))) continue;
      ++checked;
      const auto adjusted = csls_adjust(s, delta);
      if (adjusted.values != oracle::csls(v, delta)) ++csls_mismatch;
      if (mutual_nearest_labels(adjusted).pairs != oracle::mutual_nearest(adjusted.values)) ++mnn_mismatch;
    }
    std::vector<EntityPair> refs;
    std::uniform_int_distribution<EntityId> col(0, static_cast<EntityId>(cols - 1));
    for (EntityId i = 0; i < static_cast<EntityId>(rows); ++i) refs.push_back({i, col(rng)});
    const auto got = evaluate(s, refs);
    const auto want = oracle::rank_by_sort(v, refs);
    if (got.hits1 != want.hits1 || got.hits10 != want.hits10 || std::abs(got.mrr - want.mrr) > 1e-12) ++eval_mismatch;
  }
  return {csls_mismatch == 0 && mnn_mismatch == 0 && eval_mismatch == 0,
          fmt("%g csls/mnn cases: %g csls and %g mnn mismatches; 100 evaluate cases: %g mismatches", checked,
              csls_mismatch, mnn_mismatch, eval_mismatch)};
}

Outcome sampler_distribution() {
  // root 0 with five neighbours of differing degree
  std::vector<Triple> triples;
  for (EntityId n = 1; n <= 5; ++n) triples.push_back({0, n % 2, n});
  EntityId leaf = 6;
  for (EntityId n = 1; n <= 5; ++n)
    for (EntityId k = 1; k < n; ++k) triples.push_back({n, 0, leaf++});
  const KnowledgeGraph kg(leaf, 2, triples);
  std::mt19937_64 rng(404);
  const Matrix ent = 1.5 * Matrix::Random(leaf, 6);
  const Matrix rel = Matrix::Random(4, 6);
  const SamplerTables frozen(ent, rel);
  const auto dist = child_distribution(kg, 0, 0, std::nullopt, std::nullopt, frozen, SamplerOptions{});
  if (dist.size() != 5) return {false, "expected five candidates"};

  // softmax of LeakyReLU(e_0^T W_k e_c + e_0^T W_k e_c) / ln(1 + deg) with dense reflections
  std::vector<double> expected;
  double z = 0;
  const oracle::Vec e0 = ent.row(0).transpose();
  for (const auto& c : dist) {
    const oracle::Vec ec = ent.row(c.edge.neighbor).transpose();
    const oracle::Mat w = oracle::reflection(rel.row(c.edge.relation).transpose());
    const double logit = oracle::leaky(2 * e0.dot(w * ec), 0.01) / std::log(1.0 + static_cast<double>(kg.degree(c.edge.neighbor)));
    expected.push_back(std::exp(logit));
    z += expected.back();
  }
  std::vector<int> hits(5, 0);
  for (int t = 0; t < kSamplerDraws; ++t) {
    const auto chosen = sample_children(dist, 1, rng);
    for (std::size_t i = 0; i < 5; ++i) hits[i] += chosen[0].neighbor == dist[i].edge.neighbor;
  }
  double worst = 0, pmin = 1, pmax = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    const double p = expected[i] / z;
    pmin = std::min(pmin, p);
    pmax = std::max(pmax, p);
    worst = std::max(worst, std::abs(static_cast<double>(hits[i]) / kSamplerDraws - p));
  }
  return {worst <= kSamplerTol, fmt("max deviation %.4f over %g draws (p in [%.3f, %.3f])", worst, kSamplerDraws, pmin, pmax)};
}

Metrics train_bench(double sigma, std::uint64_t seed, const std::function<void(TrainConfig&)>& variant) {
  SynthSpec spec;
  spec.feature_noise_sigma = sigma;
  spec.seed = seed;
  const auto bench = generate(spec);
  TrainConfig config;
  config.epochs = kBenchEpochs;
  config.seed = seed;
  config.workers = bench_workers();
  if (variant) variant(config);
  Trainer trainer(bench.data, bench.features, config, quiet);
  return *trainer.run().back().metrics;
}

Outcome end_to_end() {
  Stopwatch clock;
  const auto m = train_bench(0.1, 0, {});
  const double t = clock.seconds();
  return {m.hits1 >= kE2eHits1 && m.mrr >= kE2eMrr && t < kE2eBudget,
          fmt("hits@1 %.3f, mrr %.4f, %.1fs on %g workers", m.hits1, m.mrr, t, static_cast<double>(bench_workers()))};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

Outcome ablation() {
  std::vector<double> full, uniform, no_align;
  std::ostringstream per_seed;
  for (int s = 0; s < kAblationSeeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    full.push_back(train_bench(kAblationSigma, seed, {}).hits1);
    uniform.push_back(train_bench(kAblationSigma, seed, [](TrainConfig& c) { c.ablation.uniform_sampling = true; }).hits1);
    no_align.push_back(train_bench(kAblationSigma, seed, [](TrainConfig& c) { c.lambda = 0.0; }).hits1);
    per_seed << " [" << full.back() << ' ' << uniform.back() << ' ' << no_align.back() << ']';
    std::cerr << "ablation seed " << s << ":" << " full " << full.back() << " uniform " << uniform.back()
              << " lambda=0 " << no_align.back() << std::endl;
  }
  const double f = median(full), u = median(uniform), n = median(no_align);
  return {f >= u && f >= n,
          fmt("median hits@1 full %.3f, uniform %.3f, lambda=0 %.3f;", f, u, n) + " per seed" + per_seed.str()};
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  const auto dir = oracle::temp_dir("determinism");
  const std::string cli = UNEA_CLI_PATH;
  const std::string data = (dir / "data").string();
  auto sh = [](const std::string& cmd) { return std::system(cmd.c_str()); };
  if (sh(cli + " synth --out " + data + " --seed 0 > /dev/null") != 0) return {false, "synth failed"};
  for (const char* run : {"a", "b"}) {
    const auto out = dir / run;
    const std::string cmd = cli + " train --data " + data + " --out " + out.string() + " --seed 0 --workers 1 --epochs " +
                            std::to_string(kDeterminismEpochs) + " > " + (dir / (std::string(run) + ".jsonl")).string() +
                            " 2> /dev/null";
    if (sh(cmd) != 0) return {false, std::string("training run ") + run + " failed"};
  }
  const auto a = read_file(dir / "a.jsonl"), b = read_file(dir / "b.jsonl");
  const auto lines = static_cast<double>(std::count(a.begin(), a.end(), '\n'));
  std::filesystem::remove_all(dir);
  return {!a.empty() && a == b, fmt("%g history lines, identical: %g", lines, a == b ? 1 : 0)};
}

struct Criterion {
  const char* name;
  Outcome (*run)();
};

constexpr Criterion kCriteria[] = {
    {"orthogonality", orthogonality},
    {"gradients", gradients},
    {"oracle_equivalence", oracle_equivalence},
    {"sampler_distribution", sampler_distribution},
    {"end_to_end", end_to_end},
    {"ablation", ablation},
    {"determinism", determinism},
};

}  // namespace

int main(int argc, char** argv) {
  const std::string only = argc > 1 ? argv[1] : "";
  bool all_pass = true, matched = false;
  for (const auto& c : kCriteria) {
    if (!only.empty() && only != c.name) continue;
    matched = true;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all_pass &= o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << ": " << o.detail << std::endl;
  }
  if (!matched) {
    std::cerr << "unknown criterion '" << only << "'\n";
    return 2;
  }
  return all_pass ? 0 : 1;
}
