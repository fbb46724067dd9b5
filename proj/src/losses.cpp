#include "unea/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "unea/relation_geometry.hpp"

namespace unea {

namespace {

std::vector<ad::Var> rows_as_inputs(ad::Tape& tape, const Matrix& m) {
  std::vector<ad::Var> out;
  out.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out.push_back(tape.input({m.row(i).data(), static_cast<std::size_t>(m.cols())}));
  }
  return out;
}

ad::Var checked(std::span<const ad::Var> table, std::size_t id, const char* what) {
  if (id >= table.size() || !table[id].valid()) {
    throw std::invalid_argument(std::string(what) + ": no output recorded for entity " + std::to_string(id));
  }
  return table[id];
}

}  // namespace

double log_pair_score(std::span<const double> a, std::span<const double> b, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("pair_score: tau must be positive");
  if (a.size() != b.size()) throw std::invalid_argument("pair_score: dimension mismatch");
  return dot(a, b) / tau;
}

double pair_score(std::span<const double> a, std::span<const double> b, double tau) {
  return std::exp(log_pair_score(a, b, tau));
}

std::vector<std::uint32_t> sample_without_replacement(std::size_t n, std::size_t k, std::size_t exclude,
                                                      std::mt19937_64& rng) {
  const std::size_t admissible = exclude < n ? n - 1 : n;
  k = std::min(k, admissible);
  std::vector<std::uint32_t> out;
  out.reserve(k);
  std::unordered_set<std::size_t> taken;
  for (std::size_t j = admissible - k; j < admissible; ++j) {
    std::uniform_int_distribution<std::size_t> pick(0, j);
    std::size_t t = pick(rng);
    if (!taken.insert(t).second) {
      t = j;
      taken.insert(t);
    }
    out.push_back(static_cast<std::uint32_t>(exclude < n && t >= exclude ? t + 1 : t));
  }
  return out;
}

AlignmentNegatives draw_alignment_negatives(std::span<const EntityPair> pairs, std::size_t n1, std::size_t n2,
                                            std::size_t n_neg, std::mt19937_64& rng) {
  AlignmentNegatives neg;
  neg.forward.reserve(pairs.size());
  neg.backward.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    neg.forward.push_back(sample_without_replacement(n2, n_neg, j, rng));
    neg.backward.push_back(sample_without_replacement(n1, n_neg, i, rng));
  }
  return neg;
}

ad::Var alignment_loss(ad::Tape& tape, std::span<const EntityPair> pairs, const AlignmentNegatives& negatives,
                       std::span<const ad::Var> out1, std::span<const ad::Var> out2, double tau) {
  if (pairs.empty()) throw std::invalid_argument("alignment_loss: empty pseudo-label set");
  if (negatives.forward.size() != pairs.size() || negatives.backward.size() != pairs.size()) {
    throw std::invalid_argument("alignment_loss: negatives do not match the pair list");
  }
  std::vector<ad::Var> terms;
  terms.reserve(2 * pairs.size());
  std::vector<ad::Var> scores;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const ad::Var ei = checked(out1, pairs[p].first, "alignment_loss");
    const ad::Var ej = checked(out2, pairs[p].second, "alignment_loss");
    const ad::Var positive = tape.dot(ei, ej);

    scores.clear();
    for (const EntityId y : negatives.forward[p]) scores.push_back(tape.dot(ei, checked(out2, y, "alignment_loss")));
    terms.push_back(tape.info_nce(positive, scores, tau));

    scores.clear();
    for (const EntityId x : negatives.backward[p]) scores.push_back(tape.dot(checked(out1, x, "alignment_loss"), ej));
    terms.push_back(tape.info_nce(positive, scores, tau));
  }
  return tape.sum(terms, 1.0 / static_cast<double>(terms.size()));
}

double alignment_loss(const PseudoLabelSet& pseudo, const Matrix& e1_out, const Matrix& e2_out, double tau,
                      std::size_t n_neg, std::mt19937_64& rng) {
  if (n_neg < 1) throw std::invalid_argument("alignment_loss: n_neg must be at least 1");
  const auto negatives = draw_alignment_negatives(pseudo.pairs, static_cast<std::size_t>(e1_out.rows()),
                                                  static_cast<std::size_t>(e2_out.rows()), n_neg, rng);
  ad::Tape tape;
  const auto out1 = rows_as_inputs(tape, e1_out);
  const auto out2 = rows_as_inputs(tape, e2_out);
  return tape.scalar_value(alignment_loss(tape, pseudo.pairs, negatives, out1, out2, tau));
}

FeatureNegatives draw_feature_negatives(std::size_t items, std::size_t n_neg, std::mt19937_64& rng) {
  FeatureNegatives neg;
  neg.features.reserve(items);
  neg.outputs.reserve(items);
  for (std::size_t i = 0; i < items; ++i) {
    neg.features.push_back(sample_without_replacement(items, n_neg, i, rng));
    neg.outputs.push_back(sample_without_replacement(items, n_neg, i, rng));
  }
  return neg;
}

ad::Var project_feature(ad::Tape& tape, std::span<const double> feature, ad::ParamId projection) {
  return tape.normalize(tape.vecmat(tape.input(feature), projection));
}

ad::Var feature_mi_loss(ad::Tape& tape, std::span<const ad::Var> outputs, std::span<const ad::Var> features,
                        const FeatureNegatives& negatives, double tau) {
  if (outputs.size() != features.size() || negatives.features.size() != outputs.size() ||
      negatives.outputs.size() != outputs.size()) {
    throw std::invalid_argument("feature_mi_loss: item count mismatch");
  }
  if (outputs.empty()) throw std::invalid_argument("feature_mi_loss: no items");
  std::vector<ad::Var> terms;
  terms.reserve(2 * outputs.size());
  std::vector<ad::Var> scores;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const ad::Var positive = tape.dot(outputs[i], features[i]);
    scores.clear();
    for (const auto k : negatives.features[i]) scores.push_back(tape.dot(outputs[i], features[k]));
    terms.push_back(tape.info_nce(positive, scores, tau));
    scores.clear();
    for (const auto k : negatives.outputs[i]) scores.push_back(tape.dot(outputs[k], features[i]));
    terms.push_back(tape.info_nce(positive, scores, tau));
  }
  return tape.sum(terms, 1.0 / static_cast<double>(terms.size()));
}

double feature_mi_loss(const Matrix& outputs, const FeatureTable& features, const Matrix& projection, double tau,
                       std::size_t n_neg, std::mt19937_64& rng) {
  if (static_cast<std::size_t>(outputs.rows()) != features.count()) {
    throw std::invalid_argument("feature_mi_loss: output and feature row counts differ");
  }
  const auto negatives = draw_feature_negatives(features.count(), n_neg, rng);
  ad::Tape tape;
  const auto p = tape.bind(projection, nullptr);
  const auto out = rows_as_inputs(tape, outputs);
  std::vector<ad::Var> feats;
  for (Eigen::Index i = 0; i < features.rows.rows(); ++i) {
    feats.push_back(project_feature(tape, {features.rows.row(i).data(), features.dim()}, p));
  }
  return tape.scalar_value(feature_mi_loss(tape, out, feats, negatives, tau));
}

double edge_weight(std::span<const double> e_i, std::span<const double> e_j, const Matrix& edge_scoring) {
  const auto d = static_cast<Eigen::Index>(e_i.size());
  if (edge_scoring.rows() != d || edge_scoring.cols() != static_cast<Eigen::Index>(e_j.size())) {
    throw std::invalid_argument("edge_weight: dimension mismatch");
  }
  Eigen::Map<const Eigen::RowVectorXd> a(e_i.data(), d);
  Eigen::Map<const Eigen::VectorXd> b(e_j.data(), static_cast<Eigen::Index>(e_j.size()));
  const double s = a * edge_scoring * b;
  return 1.0 / (1.0 + std::exp(-s));
}

TopologySample draw_topology_sample(const KnowledgeGraph& kg, std::span<const EntityId> members, double neg_ratio,
                                    std::mt19937_64& rng) {
  if (neg_ratio < 0.0) throw std::invalid_argument("draw_topology_sample: negative ratio");
  std::vector<EntityId> pool(members.begin(), members.end());
  if (pool.empty()) {
    for (EntityId e = 0; e < kg.entity_count(); ++e) pool.push_back(e);
  }
  std::vector<char> inside(kg.entity_count(), 0);
  for (const auto e : pool) inside.at(e) = 1;

  TopologySample sample;
  for (const auto& t : kg.triples()) {
    if (inside[t.head] && inside[t.tail]) sample.positives.emplace_back(t.head, t.tail);
  }
  const auto wanted = static_cast<std::size_t>(std::llround(neg_ratio * static_cast<double>(sample.positives.size())));
  if (pool.size() < 2) return sample;
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  // Bounded rejection sampling; dense graphs may yield fewer negatives than requested.
  const std::size_t budget = 50 * wanted + 100;
  for (std::size_t attempt = 0; attempt < budget && sample.negatives.size() < wanted; ++attempt) {
    const EntityId a = pool[pick(rng)];
    const EntityId b = pool[pick(rng)];
    if (a == b || kg.connected(a, b)) continue;
    sample.negatives.emplace_back(a, b);
  }
  return sample;
}

ad::Var topology_mi_loss(ad::Tape& tape, const TopologySample& sample, std::span<const ad::Var> outputs,
                         ad::ParamId edge_scoring) {
  std::unordered_map<EntityId, ad::Var> left;
  auto projected = [&](EntityId i) {
    auto [it, fresh] = left.try_emplace(i);
    if (fresh) it->second = tape.vecmat(checked(outputs, i, "topology_mi_loss"), edge_scoring);
    return it->second;
  };
  std::vector<ad::Var> terms;
  terms.reserve(sample.positives.size() + sample.negatives.size());
  auto add = [&](const EntityPair& p, double target) {
    const ad::Var logit = tape.dot(projected(p.first), checked(outputs, p.second, "topology_mi_loss"));
    terms.push_back(tape.bce_with_logit(logit, target, kProbabilityFloor));
  };
  for (const auto& p : sample.positives) add(p, 1.0);
  for (const auto& p : sample.negatives) add(p, 0.0);
  if (terms.empty()) return tape.scalar(0.0);
  return tape.sum(terms, 1.0 / static_cast<double>(terms.size()));
}

double topology_mi_loss(const KnowledgeGraph& kg, const Matrix& outputs, const Matrix& edge_scoring,
                        double neg_ratio, std::mt19937_64& rng) {
  if (kg.entity_count() == 0) throw std::invalid_argument("topology_mi_loss: empty graph");
  const auto sample = draw_topology_sample(kg, {}, neg_ratio, rng);
  ad::Tape tape;
  const auto w = tape.bind(edge_scoring, nullptr);
  const auto out = rows_as_inputs(tape, outputs);
  return tape.scalar_value(topology_mi_loss(tape, sample, out, w));
}

LossReport total_loss(double l_align, double l_ent, double l_rel, double l_topo, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("total_loss: lambda " + std::to_string(lambda) + " outside [0, 1]");
  }
  LossReport r;
  r.l_align = l_align;
  r.l_ent = l_ent;
  r.l_rel = l_rel;
  r.l_topo = l_topo;
  r.l_mi = l_ent + l_rel + l_topo;
  r.total = lambda * l_align + (1.0 - lambda) * r.l_mi;
  return r;
}

}  // namespace unea
