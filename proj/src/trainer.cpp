#include "unea/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "unea/parallel.hpp"
#include "unea/tree_encoder.hpp"

namespace unea {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Parameter order of trainable_parameters().
enum ParamSlot : std::size_t { kEntities1, kEntities2, kRelations1, kRelations2, kProjection, kAttention, kEdgeScoring };

std::size_t entity_slot(std::size_t side) { return side == 0 ? kEntities1 : kEntities2; }
std::size_t relation_slot(std::size_t side) { return side == 0 ? kRelations1 : kRelations2; }

Matrix relation_init(const FeatureTable& features, const Matrix& projection) {
  const Matrix base = init_embeddings(features, projection);
  Matrix both(2 * base.rows(), base.cols());
  both.topRows(base.rows()) = base;
  both.bottomRows(base.rows()) = base;
  return both;
}

bool all_finite(const Gradients& grads) {
  return std::all_of(grads.begin(), grads.end(), [](const Matrix& g) { return g.allFinite(); });
}

}  // namespace

FeatureSet load_feature_set(const std::filesystem::path& data_dir,
                            std::span<const std::filesystem::path> entity_files,
                            std::span<const std::filesystem::path> relation_files) {
  if ((!entity_files.empty() && entity_files.size() != 2) || (!relation_files.empty() && relation_files.size() != 2)) {
    throw std::invalid_argument("load_feature_set: give one feature file per side");
  }
  FeatureSet features;
  for (std::size_t s = 0; s < 2; ++s) {
    const auto n = std::to_string(s + 1);
    const auto ent = entity_files.empty() ? data_dir / kEntityFeatureFiles[s] : entity_files[s];
    const auto rel = relation_files.empty() ? data_dir / kRelationFeatureFiles[s] : relation_files[s];
    features.entities[s] = load_features(ent, data_dir / ("ent_ids_" + n));
    features.relations[s] = load_features(rel, data_dir / ("rel_ids_" + n));
  }
  return features;
}

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> salt) {
  std::uint64_t x = splitmix64(seed);
  for (const auto s : salt) x = splitmix64(x ^ s);
  return x;
}

Adam::Adam(double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(std::span<Matrix* const> params, std::span<const Matrix> grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("Adam::step: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.push_back(Matrix::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  ++t_;
  const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto m = m_[i].array();
    auto v = v_[i].array();
    const auto g = grads[i].array();
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.square();
    params[i]->array() -= lr_ * (m / bias1) / ((v / bias2).sqrt() + eps_);
  }
}

Trainer::Trainer(const KnowledgeGraphPair& data, FeatureSet features, TrainConfig config, Logger log)
    : data_(&data),
      features_(std::move(features)),
      config_(config),
      log_(std::move(log)),
      optimizer_(config.learning_rate),
      rng_(derive_seed(config.seed, {2})) {
  config_.validate();
  const std::size_t feature_dim = features_.entities[0].dim();
  for (std::size_t s = 0; s < 2; ++s) {
    const auto& kg = data_->graph(static_cast<KgSide>(s));
    const auto which = std::to_string(s + 1);
    if (features_.entities[s].count() != kg.entity_count()) {
      throw DataError("entity features " + which + " have " + std::to_string(features_.entities[s].count()) +
                      " rows for " + std::to_string(kg.entity_count()) + " entities");
    }
    if (features_.relations[s].count() != kg.relation_count()) {
      throw DataError("relation features " + which + " have " + std::to_string(features_.relations[s].count()) +
                      " rows for " + std::to_string(kg.relation_count()) + " relations");
    }
    if (features_.entities[s].dim() != feature_dim ||
        (features_.relations[s].count() > 0 && features_.relations[s].dim() != feature_dim)) {
      throw DataError("all feature files must share one dimension");
    }
  }
  const auto smallest = std::min(data_->g1.entity_count(), data_->g2.entity_count());
  if (config_.delta > smallest) {
    throw std::invalid_argument("invalid config: delta " + std::to_string(config_.delta) +
                                " exceeds the smaller graph's " + std::to_string(smallest) + " entities");
  }

  std::mt19937_64 init_rng(derive_seed(config_.seed, {0}));
  const auto d = static_cast<Eigen::Index>(config_.dim);
  tables_.projection = orthonormal_projection(feature_dim, config_.dim, init_rng);
  tables_.attention = xavier_uniform(1, 3 * d, static_cast<double>(3 * d), 1.0, init_rng);
  tables_.edge_scoring = xavier_uniform(d, d, static_cast<double>(d), static_cast<double>(d), init_rng);
  for (std::size_t s = 0; s < 2; ++s) {
    tables_.entities[s] = init_embeddings(features_.entities[s], tables_.projection);
    tables_.relations[s] = features_.relations[s].count() > 0 ? relation_init(features_.relations[s], tables_.projection)
                                                                : Matrix(0, d);
    tables_.frozen_entities[s] = tables_.entities[s];
    tables_.frozen_relations[s] = tables_.relations[s];
  }
}

void Trainer::log(std::string_view message) const {
  if (log_) {
    log_(message);
  } else {
    std::cerr << message << '\n';
  }
}

RootedTree tree_for(const KnowledgeGraph& kg, KgSide side, EntityId root, const SamplerTables& frozen,
                    const TrainConfig& config, std::uint32_t refresh) {
  if (config.ablation.plain_gnn_encoder) return full_neighborhood_tree(kg, side, root);
  SamplerOptions options;
  options.depth = config.depth;
  options.fanout = config.fanout;
  options.leaky_slope = config.leaky_slope;
  options.uniform = config.ablation.uniform_sampling;
  std::mt19937_64 rng(derive_seed(config.seed, {1, refresh, index_of(side), root}));
  return sample_tree(kg, side, root, options, frozen, rng);
}

void Trainer::resample_trees() {
  for (std::size_t s = 0; s < 2; ++s) {
    const auto side = static_cast<KgSide>(s);
    const auto& kg = data_->graph(side);
    const SamplerTables frozen(tables_.frozen_entities[s], tables_.frozen_relations[s]);
    auto& trees = trees_[s];
    trees.clear();
    for (EntityId e = 0; e < kg.entity_count(); ++e) trees.emplace_back(side, e);
    parallel_for(trees.size(), config_.workers, [&](std::size_t, std::size_t begin, std::size_t end) {
      for (std::size_t e = begin; e < end; ++e) {
        trees[e] = tree_for(kg, side, static_cast<EntityId>(e), frozen, config_, refreshes_);
      }
    });
  }
}

void Trainer::encode_all() {
  if (trees_[0].empty() && data_->g1.entity_count() > 0) throw std::logic_error("encode_all: refresh() has not run");
  for (std::size_t s = 0; s < 2; ++s) {
    auto& out = outputs_[s];
    const auto& trees = trees_[s];
    out.resize(static_cast<Eigen::Index>(trees.size()), static_cast<Eigen::Index>(config_.dim));
    parallel_for(trees.size(), config_.workers, [&](std::size_t, std::size_t begin, std::size_t end) {
      ad::Tape tape;
      const EncoderParams params{tape.bind(tables_.entities[s], nullptr), tape.bind(tables_.relations[s], nullptr),
                                 tape.bind(tables_.attention, nullptr)};
      for (std::size_t e = begin; e < end; ++e) {
        tape.clear();
        const auto root = encode_tree(tape, trees[e], params, config_.leaky_slope);
        const auto value = tape.value(root);
        std::copy(value.begin(), value.end(), out.row(static_cast<Eigen::Index>(e)).data());
      }
    });
  }
}

void Trainer::refresh() {
  for (std::size_t s = 0; s < 2; ++s) {
    momentum_update(tables_.frozen_entities[s], tables_.entities[s], config_.mu);
    momentum_update(tables_.frozen_relations[s], tables_.relations[s], config_.mu);
  }
  resample_trees();
  encode_all();
  const auto sim = similarity_matrix(outputs_[0], outputs_[1], config_.workers);
  auto labels = mutual_nearest_labels(csls_adjust(sim, config_.delta, config_.workers));
  ++refreshes_;
  if (labels.empty()) {
    if (pseudo_.empty()) throw NumericError("no pseudo-labels could be generated; cannot start training");
    log("warning: refresh produced no pseudo-labels; keeping the previous " + std::to_string(pseudo_.size()));
    return;
  }
  pseudo_ = std::move(labels);
}

Metrics Trainer::evaluate(bool csls) const {
  const auto sim = similarity_matrix(outputs_[0], outputs_[1], config_.workers);
  if (csls) return unea::evaluate(csls_adjust(sim, config_.delta, config_.workers), data_->ref_pairs);
  return unea::evaluate(sim, data_->ref_pairs);
}

BatchPlan Trainer::plan_batch(std::span<const EntityPair> pairs, std::mt19937_64& rng) const {
  BatchPlan plan;
  plan.pairs.assign(pairs.begin(), pairs.end());
  plan.negatives = draw_alignment_negatives(pairs, data_->g1.entity_count(), data_->g2.entity_count(),
                                            config_.n_neg, rng);
  auto& m1 = plan.members[0];
  auto& m2 = plan.members[1];
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    m1.push_back(pairs[p].first);
    m2.push_back(pairs[p].second);
    m1.insert(m1.end(), plan.negatives.backward[p].begin(), plan.negatives.backward[p].end());
    m2.insert(m2.end(), plan.negatives.forward[p].begin(), plan.negatives.forward[p].end());
  }
  for (auto& m : plan.members) {
    std::sort(m.begin(), m.end());
    m.erase(std::unique(m.begin(), m.end()), m.end());
  }
  for (std::size_t s = 0; s < 2; ++s) {
    const auto& kg = data_->graph(static_cast<KgSide>(s));
    plan.entity_negatives[s] = draw_feature_negatives(plan.members[s].size(), config_.n_neg, rng);
    for (auto& half : plan.relation_negatives[s]) half = draw_feature_negatives(kg.relation_count(), config_.n_neg, rng);
    plan.topology[s] = draw_topology_sample(kg, plan.members[s], config_.neg_edge_ratio, rng);
  }
  return plan;
}

Gradients Trainer::zero_gradients() {
  Gradients grads;
  for (const auto& p : trainable_parameters(tables_)) grads.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
  return grads;
}

LossReport Trainer::batch_loss(const BatchPlan& plan, Gradients* grads) {
  if (trees_[0].empty() && data_->g1.entity_count() > 0) throw std::logic_error("batch_loss: refresh() has not run");
  if (grads != nullptr) *grads = zero_gradients();
  const double tau = config_.tau;
  const double slope = config_.leaky_slope;
  const auto d = static_cast<Eigen::Index>(config_.dim);

  // Forward pass of every member tree; only the root outputs are kept.
  std::array<Matrix, 2> raw;
  for (std::size_t s = 0; s < 2; ++s) {
    const auto& members = plan.members[s];
    raw[s].resize(static_cast<Eigen::Index>(members.size()), d);
    parallel_for(members.size(), config_.workers, [&](std::size_t, std::size_t begin, std::size_t end) {
      ad::Tape tape;
      const EncoderParams params{tape.bind(tables_.entities[s], nullptr), tape.bind(tables_.relations[s], nullptr),
                                 tape.bind(tables_.attention, nullptr)};
      for (std::size_t k = begin; k < end; ++k) {
        tape.clear();
        const auto value = tape.value(encode_tree(tape, trees_[s][members[k]], params, slope));
        std::copy(value.begin(), value.end(), raw[s].row(static_cast<Eigen::Index>(k)).data());
      }
    });
  }

  // Loss over the root outputs.
  ad::Tape tape;
  auto grad_of = [&](std::size_t slot) { return grads != nullptr ? &(*grads)[slot] : nullptr; };
  const auto projection = tape.bind(tables_.projection, grad_of(kProjection));
  const auto edge_scoring = tape.bind(tables_.edge_scoring, grad_of(kEdgeScoring));
  std::array<ad::ParamId, 2> relations{};
  std::array<std::vector<ad::Var>, 2> raw_vars;
  std::array<std::vector<ad::Var>, 2> unit_by_entity;
  for (std::size_t s = 0; s < 2; ++s) {
    relations[s] = tape.bind(tables_.relations[s], grad_of(relation_slot(s)));
    unit_by_entity[s].assign(data_->graph(static_cast<KgSide>(s)).entity_count(), ad::Var{});
    for (std::size_t k = 0; k < plan.members[s].size(); ++k) {
      const auto row = raw[s].row(static_cast<Eigen::Index>(k));
      raw_vars[s].push_back(tape.input({row.data(), static_cast<std::size_t>(d)}));
      unit_by_entity[s][plan.members[s][k]] = tape.normalize(raw_vars[s].back());
    }
  }

  const ad::Var l_align =
      alignment_loss(tape, plan.pairs, plan.negatives, unit_by_entity[0], unit_by_entity[1], tau);

  std::array<ad::Var, 2> ent{}, rel{}, topo{};
  for (std::size_t s = 0; s < 2; ++s) {
    const auto& members = plan.members[s];
    const auto& feats = features_.entities[s].rows;
    std::vector<ad::Var> outs, projected;
    for (const auto e : members) {
      outs.push_back(unit_by_entity[s][e]);
      projected.push_back(project_feature(tape, {feats.row(e).data(), static_cast<std::size_t>(feats.cols())}, projection));
    }
    ent[s] = feature_mi_loss(tape, outs, projected, plan.entity_negatives[s], tau);

    const auto rel_count = data_->graph(static_cast<KgSide>(s)).relation_count();
    if (rel_count == 0) {
      rel[s] = tape.scalar(0.0);
    } else {
      const auto& rfeats = features_.relations[s].rows;
      std::vector<ad::Var> feature_vars;
      for (std::size_t k = 0; k < rel_count; ++k) {
        feature_vars.push_back(project_feature(
            tape, {rfeats.row(static_cast<Eigen::Index>(k)).data(), static_cast<std::size_t>(rfeats.cols())}, projection));
      }
      std::array<ad::Var, 2> halves{};
      for (std::size_t h = 0; h < 2; ++h) {
        std::vector<ad::Var> rows;
        for (std::size_t k = 0; k < rel_count; ++k) {
          rows.push_back(tape.normalize(tape.row(relations[s], static_cast<Eigen::Index>(h * rel_count + k))));
        }
        halves[h] = feature_mi_loss(tape, rows, feature_vars, plan.relation_negatives[s][h], tau);
      }
      rel[s] = tape.sum(halves, 0.5);
    }
    topo[s] = topology_mi_loss(tape, plan.topology[s], unit_by_entity[s], edge_scoring);
  }
  const ad::Var l_ent = tape.sum(ent, 0.5);
  const ad::Var l_rel = tape.sum(rel, 0.5);
  const ad::Var l_topo = tape.sum(topo, 0.5);

  const double lambda = config_.effective_lambda();
  const ad::Var mi_terms[] = {l_ent, l_rel, l_topo};
  const ad::Var weighted[] = {tape.scale(l_align, lambda), tape.sum(mi_terms, 1.0 - lambda)};
  const ad::Var total = tape.sum(weighted);

  LossReport report = total_loss(tape.scalar_value(l_align), tape.scalar_value(l_ent), tape.scalar_value(l_rel),
                                 tape.scalar_value(l_topo), lambda);
  report.total = tape.scalar_value(total);
  if (grads == nullptr) return report;

  tape.backward(total);

  // Push each root's gradient back through its own tree.
  struct Local {
    std::array<Matrix, 2> entities, relations;
    Matrix attention;
  };
  for (std::size_t s = 0; s < 2; ++s) {
    const auto& members = plan.members[s];
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(config_.workers, members.size()));
    std::vector<Local> locals(workers);
    for (auto& l : locals) {
      l.entities[s] = Matrix::Zero(tables_.entities[s].rows(), d);
      l.relations[s] = Matrix::Zero(tables_.relations[s].rows(), d);
      l.attention = Matrix::Zero(1, 3 * d);
    }
    parallel_for(members.size(), workers, [&](std::size_t w, std::size_t begin, std::size_t end) {
      auto& local = locals[w];
      ad::Tape enc;
      const EncoderParams params{enc.bind(tables_.entities[s], &local.entities[s]),
                                 enc.bind(tables_.relations[s], &local.relations[s]),
                                 enc.bind(tables_.attention, &local.attention)};
      for (std::size_t k = begin; k < end; ++k) {
        const auto seed = tape.grad(raw_vars[s][k]);
        if (std::all_of(seed.begin(), seed.end(), [](double g) { return g == 0.0; })) continue;
        enc.clear();
        enc.backward(encode_tree(enc, trees_[s][members[k]], params, slope), seed);
      }
    });
    for (const auto& l : locals) {
      (*grads)[entity_slot(s)] += l.entities[s];
      (*grads)[relation_slot(s)] += l.relations[s];
      (*grads)[kAttention] += l.attention;
    }
  }
  return report;
}

LossReport Trainer::train_epoch() {
  if (pseudo_.empty()) throw std::logic_error("train_epoch: no pseudo-labels; call refresh() first");
  std::vector<EntityPair> order = pseudo_.pairs;
  std::shuffle(order.begin(), order.end(), rng_);

  auto params_view = trainable_parameters(tables_);
  std::vector<Matrix*> params;
  for (auto& p : params_view) params.push_back(p.value);

  LossReport mean;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
    const auto count = std::min<std::size_t>(config_.batch_size, order.size() - start);
    const auto plan = plan_batch(std::span<const EntityPair>(order).subspan(start, count), rng_);
    Gradients grads;
    const auto r = batch_loss(plan, &grads);
    if (!std::isfinite(r.total) || !all_finite(grads)) {
      std::ostringstream msg;
      msg << "non-finite loss at epoch " << epoch_ << ", batch " << batches << " (align=" << r.l_align
          << " ent=" << r.l_ent << " rel=" << r.l_rel << " topo=" << r.l_topo << ")";
      throw NumericError(msg.str());
    }
    optimizer_.step(params, grads);
    mean.l_align += r.l_align;
    mean.l_ent += r.l_ent;
    mean.l_rel += r.l_rel;
    mean.l_topo += r.l_topo;
    mean.l_mi += r.l_mi;
    mean.total += r.total;
    ++batches;
  }
  const double n = static_cast<double>(batches);
  mean.l_align /= n;
  mean.l_ent /= n;
  mean.l_rel /= n;
  mean.l_topo /= n;
  mean.l_mi /= n;
  mean.total /= n;
  ++epoch_;
  return mean;
}

std::vector<EpochRecord> Trainer::run(const std::function<void(const EpochRecord&)>& on_epoch) {
  std::vector<EpochRecord> history;
  auto emit = [&](EpochRecord record) {
    if (on_epoch) on_epoch(record);
    history.push_back(std::move(record));
  };
  for (std::uint32_t e = 0; e < config_.epochs; ++e) {
    EpochRecord record;
    record.epoch = e;
    if (e % config_.refresh_interval == 0) {
      refresh();
      record.metrics = evaluate();
    }
    record.loss = train_epoch();
    record.pseudo_labels = pseudo_.size();
    emit(std::move(record));
  }
  if (refreshes_ == 0) refresh();
  encode_all();
  EpochRecord last;
  last.epoch = config_.epochs;
  last.pseudo_labels = pseudo_.size();
  last.metrics = evaluate();
  last.final = true;
  emit(std::move(last));
  return history;
}

}  // namespace unea
