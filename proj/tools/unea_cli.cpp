// unea: train, evaluate, export, synth, inspect.
// JSON lines go to stdout, diagnostics to stderr.
// Exit codes: 0 ok, 1 usage, 2 data, 3 numeric.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "unea/alignment.hpp"
#include "unea/checkpoint.hpp"
#include "unea/synth.hpp"
#include "unea/trainer.hpp"
#include "unea/tree_encoder.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kNumeric = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json metrics_json(const unea::Metrics& m) { return {{"hits1", m.hits1}, {"hits10", m.hits10}, {"mrr", m.mrr}}; }

json record_json(const unea::EpochRecord& r) {
  json j;
  j["epoch"] = r.epoch;
  if (r.final) {
    j["final"] = true;
  } else {
    j["loss"] = {{"total", r.loss.total},     {"align", r.loss.l_align}, {"ent", r.loss.l_ent},
                 {"rel", r.loss.l_rel},       {"topo", r.loss.l_topo},   {"mi", r.loss.l_mi}};
  }
  j["pseudo_labels"] = r.pseudo_labels;
  if (r.metrics) j["metrics"] = metrics_json(*r.metrics);
  return j;
}

void emit(const json& j) { std::cout << j.dump() << std::endl; }

void apply_overrides(unea::TrainConfig& config, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    config.set(unea::trim(std::string_view(kv).substr(0, eq)), unea::trim(std::string_view(kv).substr(eq + 1)));
  }
}

std::vector<unea::ScoredPair> alignments(const unea::Checkpoint& ckpt, bool csls, std::size_t top) {
  auto sim = unea::similarity_matrix(ckpt.outputs[0], ckpt.outputs[1], ckpt.config.workers);
  if (csls) sim = unea::csls_adjust(sim, ckpt.config.delta, ckpt.config.workers);
  return unea::top_alignments(sim, top);
}

void check_outputs(const unea::Checkpoint& ckpt, const unea::KnowledgeGraphPair& data) {
  if (static_cast<std::size_t>(ckpt.outputs[0].rows()) != data.g1.entity_count() ||
      static_cast<std::size_t>(ckpt.outputs[1].rows()) != data.g2.entity_count()) {
    throw unea::DataError("checkpoint was trained on graphs of a different size");
  }
}

void write_alignments(const fs::path& path, const std::vector<unea::ScoredPair>& pairs,
                      const unea::KnowledgeGraphPair& data) {
  std::ofstream out(path);
  if (!out) throw unea::DataError("cannot write " + path.string());
  char score[32];
  for (const auto& p : pairs) {
    std::snprintf(score, sizeof score, "%.6f", static_cast<double>(p.score));
    out << data.g1.entity_ids().file_id(p.first) << '\t' << data.g2.entity_ids().file_id(p.second) << '\t' << score
        << '\n';
  }
}

struct TrainArgs {
  std::string data, config, out;
  std::vector<std::string> ent_emb, rel_emb, sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint32_t> workers, epochs;
};

int run_train(const TrainArgs& a) {
  unea::TrainConfig config = a.config.empty() ? unea::TrainConfig{} : unea::TrainConfig::load(a.config);
  apply_overrides(config, a.sets);
  if (a.seed) config.seed = *a.seed;
  if (a.workers) config.workers = *a.workers;
  if (a.epochs) config.epochs = *a.epochs;
  config.validate();

  const fs::path dir = a.data;
  const auto data = unea::load_kg_pair(dir);
  const std::vector<fs::path> ent(a.ent_emb.begin(), a.ent_emb.end()), rel(a.rel_emb.begin(), a.rel_emb.end());
  auto features = unea::load_feature_set(dir, ent, rel);

  unea::Trainer trainer(data, std::move(features), config, [](std::string_view m) { std::cerr << m << '\n'; });
  const fs::path out = a.out;
  fs::create_directories(out);
  std::ofstream history(out / "history.jsonl");
  try {
    trainer.run([&](const unea::EpochRecord& r) {
      const auto j = record_json(r);
      emit(j);
      history << j.dump() << '\n';
    });
  } catch (const unea::NumericError&) {
    const auto dump = out / "failed_state";
    unea::save_checkpoint(unea::snapshot(trainer, dir), dump);
    std::cerr << "state dumped to " << dump.string() << '\n';
    throw;
  }
  const auto ckpt = unea::snapshot(trainer, dir);
  unea::save_checkpoint(ckpt, out);
  write_alignments(out / "alignments.tsv", alignments(ckpt, false, 1), data);
  return 0;
}

int run_evaluate(const std::string& checkpoint, const std::string& data_dir, bool csls) {
  const auto ckpt = unea::load_checkpoint(checkpoint);
  const auto data = unea::load_kg_pair(data_dir);
  check_outputs(ckpt, data);
  auto sim = unea::similarity_matrix(ckpt.outputs[0], ckpt.outputs[1], ckpt.config.workers);
  if (csls) sim = unea::csls_adjust(sim, ckpt.config.delta, ckpt.config.workers);
  auto j = metrics_json(unea::evaluate(sim, data.ref_pairs));
  j["csls"] = csls;
  emit(j);
  return 0;
}

int run_export(const std::string& checkpoint, const std::string& data_dir, const std::string& out, std::size_t top,
               bool csls) {
  const auto ckpt = unea::load_checkpoint(checkpoint);
  const auto data = unea::load_kg_pair(data_dir);
  check_outputs(ckpt, data);
  const auto pairs = alignments(ckpt, csls, top);
  write_alignments(out, pairs, data);
  emit({{"written", pairs.size()}, {"path", out}});
  return 0;
}

int run_synth(const std::string& spec_path, const std::string& out, std::optional<std::uint64_t> seed,
              const std::vector<std::string>& sets) {
  unea::SynthSpec spec = spec_path.empty() ? unea::SynthSpec{} : unea::SynthSpec::load(spec_path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    spec.set(unea::trim(std::string_view(kv).substr(0, eq)), unea::trim(std::string_view(kv).substr(eq + 1)));
  }
  if (seed) spec.seed = *seed;
  const auto bench = unea::generate(spec);
  unea::write_benchmark(bench, out);
  emit({{"out", out},
        {"entities", spec.n_entities},
        {"triples_1", bench.data.g1.triples().size()},
        {"triples_2", bench.data.g2.triples().size()},
        {"relations", spec.n_relations}});
  return 0;
}

int run_inspect(const std::string& checkpoint, std::string data_dir, std::int64_t entity, int side_number,
                bool as_text) {
  const auto ckpt = unea::load_checkpoint(checkpoint);
  if (data_dir.empty()) data_dir = ckpt.data_dir;
  const auto data = unea::load_kg_pair(data_dir);
  check_outputs(ckpt, data);
  const auto side = side_number == 1 ? unea::KgSide::kFirst : unea::KgSide::kSecond;
  const auto s = unea::index_of(side);
  const auto& kg = data.graph(side);
  const auto root = kg.entity_ids().dense(entity);
  if (!root) throw unea::DataError("entity " + std::to_string(entity) + " is not in graph " + std::to_string(side_number));

  const unea::SamplerTables frozen(ckpt.tables.frozen_entities[s], ckpt.tables.frozen_relations[s]);
  const std::uint32_t refresh = ckpt.refreshes > 0 ? ckpt.refreshes - 1 : 0;
  const auto tree = unea::tree_for(kg, side, *root, frozen, ckpt.config, refresh);
  std::vector<double> weights;
  unea::encode_root(tree, ckpt.tables.entities[s], ckpt.tables.relations[s], ckpt.tables.attention,
                    ckpt.config.leaky_slope, &weights);

  const auto relations = kg.relation_count();
  json nodes = json::array();
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const auto& n = tree.node(i);
    json j{{"index", i},
           {"depth", n.depth},
           {"parent", n.parent},
           {"entity", kg.entity_ids().file_id(n.entity)},
           {"name", kg.entity_ids().name(n.entity)},
           {"attention", weights[i]}};
    if (n.parent >= 0) {
      const bool inverse = n.relation >= relations;
      const auto base = inverse ? n.relation - relations : n.relation;
      j["relation"] = kg.relation_ids().name(base);
      j["inverse"] = inverse;
    }
    nodes.push_back(std::move(j));
  }
  if (!as_text) {
    emit({{"side", side_number}, {"root", entity}, {"nodes", nodes}});
    return 0;
  }
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const auto& n = tree.node(i);
    std::cout << std::string(2 * n.depth, ' ') << kg.entity_ids().name(n.entity);
    if (n.parent >= 0) {
      const bool inverse = n.relation >= relations;
      std::cout << "  via " << (inverse ? "^" : "") << kg.relation_ids().name(inverse ? n.relation - relations : n.relation)
                << "  a=" << weights[i];
    }
    std::cout << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised entity alignment over two knowledge graphs"};
  app.require_subcommand(1, 1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train on a graph pair and write a checkpoint");
  train_cmd->add_option("--data", train.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--ent-emb", train.ent_emb, "Entity feature files for graph 1 and 2")->expected(2);
  train_cmd->add_option("--rel-emb", train.rel_emb, "Relation feature files for graph 1 and 2")->expected(2);
  train_cmd->add_option("--config", train.config, "Config file (key = value lines)");
  train_cmd->add_option("--out", train.out, "Checkpoint directory")->required();
  train_cmd->add_option("--set", train.sets, "Config override key=value");
  train_cmd->add_option("--seed", train.seed, "Random seed (default 0)");
  train_cmd->add_option("--workers", train.workers, "Worker threads; 1 is deterministic");
  train_cmd->add_option("--epochs", train.epochs, "Epoch budget");

  std::string checkpoint, data_dir, out;
  bool csls = false;
  auto* eval_cmd = app.add_subcommand("evaluate", "Hits@1, Hits@10 and MRR of a checkpoint");
  eval_cmd->add_option("--checkpoint", checkpoint)->required();
  eval_cmd->add_option("--data", data_dir)->required();
  eval_cmd->add_flag("--csls", csls, "Rank by CSLS instead of cosine");

  std::size_t top = 1;
  auto* export_cmd = app.add_subcommand("export-alignments", "Write id1<TAB>id2<TAB>score lines");
  export_cmd->add_option("--checkpoint", checkpoint)->required();
  export_cmd->add_option("--data", data_dir)->required();
  export_cmd->add_option("--out", out)->required();
  export_cmd->add_option("--top", top, "Candidates kept per graph-1 entity")->check(CLI::PositiveNumber);
  export_cmd->add_flag("--csls", csls, "Score by CSLS instead of cosine");

  std::string spec;
  std::optional<std::uint64_t> synth_seed;
  std::vector<std::string> synth_sets;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a twin-graph benchmark");
  synth_cmd->add_option("--spec", spec, "Spec file (key = value lines)");
  synth_cmd->add_option("--out", out)->required();
  synth_cmd->add_option("--seed", synth_seed);
  synth_cmd->add_option("--set", synth_sets, "Spec override key=value");

  std::int64_t entity = 0;
  int side = 1;
  bool tree_flag = false;
  auto* inspect_cmd = app.add_subcommand("inspect", "Print an entity's sampled tree with attention weights");
  inspect_cmd->add_option("--checkpoint", checkpoint)->required();
  inspect_cmd->add_option("--entity", entity, "Entity id as written in ent_ids")->required();
  inspect_cmd->add_option("--side", side, "Graph 1 or 2")->check(CLI::IsMember({1, 2}));
  inspect_cmd->add_option("--data", data_dir, "Dataset directory (default: the one recorded at training)");
  inspect_cmd->add_flag("--tree", tree_flag, "Print an indented text tree instead of JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*train_cmd) return run_train(train);
    if (*eval_cmd) return run_evaluate(checkpoint, data_dir, csls);
    if (*export_cmd) return run_export(checkpoint, data_dir, out, top, csls);
    if (*synth_cmd) return run_synth(spec, out, synth_seed, synth_sets);
    if (*inspect_cmd) return run_inspect(checkpoint, data_dir, entity, side, tree_flag);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const unea::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const unea::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
