#pragma once

#include <compare>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "unea/common.hpp"

namespace unea {

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  auto operator<=>(const Triple&) const = default;
};

// One adjacency entry. Inverse edges carry relation id k + relation_count.
struct Edge {
  RelationId relation = 0;
  EntityId neighbor = 0;

  auto operator<=>(const Edge&) const = default;
};

// Bijection between the ids used in the files and dense 0-based ids.
class IdMap {
 public:
  IdMap() = default;
  static IdMap identity(std::size_t count);

  // Throws DataError on a duplicate file id.
  std::uint32_t add(std::int64_t file_id, std::string name);

  std::size_t size() const { return file_ids_.size(); }
  std::int64_t file_id(std::uint32_t dense) const { return file_ids_.at(dense); }
  const std::string& name(std::uint32_t dense) const { return names_.at(dense); }
  std::optional<std::uint32_t> dense(std::int64_t file_id) const;

 private:
  std::vector<std::int64_t> file_ids_;
  std::vector<std::string> names_;
  std::unordered_map<std::int64_t, std::uint32_t> index_;
};

class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;
  // Dense-id constructor. Throws std::invalid_argument on dangling ids.
  KnowledgeGraph(std::size_t entity_count, std::size_t relation_count, std::vector<Triple> triples);
  KnowledgeGraph(IdMap entities, IdMap relations, std::vector<Triple> triples);

  std::size_t entity_count() const { return entities_.size(); }
  // Original relations only; inverse ids occupy [relation_count, 2 * relation_count).
  std::size_t relation_count() const { return relations_.size(); }
  std::size_t relation_slots() const { return 2 * relations_.size(); }
  const std::vector<Triple>& triples() const { return triples_; }

  // Sorted by (relation, neighbor). Throws std::out_of_range on a bad id.
  std::span<const Edge> neighbors(EntityId entity) const;
  std::size_t degree(EntityId entity) const;

  // True when any triple links a and b, in either direction.
  bool connected(EntityId a, EntityId b) const;

  const IdMap& entity_ids() const { return entities_; }
  const IdMap& relation_ids() const { return relations_; }

 private:
  void build_index();

  IdMap entities_;
  IdMap relations_;
  std::vector<Triple> triples_;
  std::vector<std::size_t> offsets_;
  std::vector<Edge> adjacency_;
  std::vector<std::uint64_t> linked_pairs_;
};

struct KnowledgeGraphPair {
  KnowledgeGraph g1;
  KnowledgeGraph g2;
  // Evaluation only. Training never reads these.
  std::vector<std::pair<EntityId, EntityId>> ref_pairs;

  const KnowledgeGraph& graph(KgSide side) const { return side == KgSide::kFirst ? g1 : g2; }
};

// Reads triples_{1,2}, ent_ids_{1,2}, rel_ids_{1,2} and ref_ent_ids from dir.
// Throws DataError on a missing file, malformed line, dangling or duplicate id.
KnowledgeGraphPair load_kg_pair(const std::filesystem::path& dir);

// Writes the same layout using each graph's file ids.
void save_kg_pair(const KnowledgeGraphPair& pair, const std::filesystem::path& dir);

}  // namespace unea
