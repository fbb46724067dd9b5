#include "unea/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

namespace unea {

namespace {

constexpr const char* kFormat = "UNEA-CKPT 1";

std::string hex(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << v;
  return out.str();
}

// Works for both const and mutable checkpoints.
template <typename C>
auto tensors(C& c) {
  using Ptr = decltype(&c.outputs[0]);
  std::vector<std::pair<std::string, Ptr>> out;
  for (std::size_t s = 0; s < 2; ++s) {
    const auto n = std::to_string(s + 1);
    out.emplace_back("entities_" + n, &c.tables.entities[s]);
    out.emplace_back("relations_" + n, &c.tables.relations[s]);
    out.emplace_back("frozen_entities_" + n, &c.tables.frozen_entities[s]);
    out.emplace_back("frozen_relations_" + n, &c.tables.frozen_relations[s]);
    out.emplace_back("outputs_" + n, &c.outputs[s]);
  }
  out.emplace_back("projection", &c.tables.projection);
  out.emplace_back("attention", &c.tables.attention);
  out.emplace_back("edge_scoring", &c.tables.edge_scoring);
  return out;
}

}  // namespace

Checkpoint snapshot(const Trainer& trainer, const std::filesystem::path& data_dir) {
  Checkpoint c;
  c.tables = trainer.tables();
  c.outputs = {trainer.outputs(KgSide::kFirst), trainer.outputs(KgSide::kSecond)};
  c.config = trainer.config();
  c.epoch = trainer.epoch();
  c.refreshes = trainer.refresh_count();
  c.data_dir = std::filesystem::absolute(data_dir).lexically_normal().string();
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = kFormat;
  manifest["epoch"] = ckpt.epoch;
  manifest["refreshes"] = ckpt.refreshes;
  manifest["config"] = ckpt.config.to_text();
  manifest["config_hash"] = hex(ckpt.config.hash());
  manifest["data_dir"] = ckpt.data_dir;
  for (const auto& [name, m] : tensors(ckpt)) {
    const auto file = name + ".emb";
    write_emb(dir / file, *m);
    manifest["tensors"][name] = {{"file", file}, {"rows", m->rows()}, {"cols", m->cols()}};
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("missing checkpoint manifest: " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  try {
    if (manifest.at("format") != kFormat) throw DataError("unsupported checkpoint format");
    Checkpoint c;
    c.config = TrainConfig::parse(manifest.at("config").get<std::string>());
    if (manifest.at("config_hash").get<std::string>() != hex(c.config.hash())) {
      throw DataError("checkpoint config hash does not match its config text");
    }
    c.epoch = manifest.at("epoch").get<std::uint32_t>();
    c.refreshes = manifest.at("refreshes").get<std::uint32_t>();
    c.data_dir = manifest.at("data_dir").get<std::string>();
    for (const auto& [name, target] : tensors(c)) {
      const auto& entry = manifest.at("tensors").at(name);
      const MatrixF m = read_emb(dir / entry.at("file").get<std::string>());
      if (m.rows() != entry.at("rows").get<Eigen::Index>() || m.cols() != entry.at("cols").get<Eigen::Index>()) {
        throw DataError("checkpoint tensor " + name + " does not match its manifest shape");
      }
      *target = m.cast<double>();
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint manifest: " + std::string(e.what()));
  } catch (const std::invalid_argument& e) {
    throw DataError("malformed checkpoint config: " + std::string(e.what()));
  }
}

}  // namespace unea
