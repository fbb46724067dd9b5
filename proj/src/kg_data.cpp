#include "unea/kg_data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace unea {

namespace {

std::uint64_t pair_key(EntityId a, EntityId b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::int64_t parse_id(std::string_view text, const std::filesystem::path& file, std::size_t line_no) {
  std::int64_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw DataError(file.string() + ":" + std::to_string(line_no) + ": not an integer id '" +
                    std::string(text) + "'");
  }
  return value;
}

// Calls fn(fields, line_no) for every non-empty line, enforcing the column count.
template <typename Fn>
void for_each_row(const std::filesystem::path& file, std::size_t columns, Fn&& fn) {
  std::ifstream in(file);
  if (!in) throw DataError("missing file: " + file.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != columns) {
      throw DataError(file.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(columns) + " tab-separated columns, got " +
                      std::to_string(fields.size()));
    }
    fn(fields, line_no);
  }
}

IdMap read_ids(const std::filesystem::path& file) {
  IdMap ids;
  for_each_row(file, 2, [&](const auto& fields, std::size_t line_no) {
    try {
      ids.add(parse_id(fields[0], file, line_no), std::string(fields[1]));
    } catch (const DataError& e) {
      throw DataError(file.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
  return ids;
}

KnowledgeGraph read_graph(const std::filesystem::path& dir, int which) {
  const auto suffix = "_" + std::to_string(which);
  IdMap entities = read_ids(dir / ("ent_ids" + suffix));
  IdMap relations = read_ids(dir / ("rel_ids" + suffix));
  const auto triples_file = dir / ("triples" + suffix);
  std::vector<Triple> triples;
  for_each_row(triples_file, 3, [&](const auto& fields, std::size_t line_no) {
    const auto where = triples_file.string() + ":" + std::to_string(line_no) + ": ";
    const auto head = entities.dense(parse_id(fields[0], triples_file, line_no));
    const auto rel = relations.dense(parse_id(fields[1], triples_file, line_no));
    const auto tail = entities.dense(parse_id(fields[2], triples_file, line_no));
    if (!head || !tail) throw DataError(where + "dangling entity id");
    if (!rel) throw DataError(where + "dangling relation id");
    triples.push_back({*head, *rel, *tail});
  });
  return KnowledgeGraph(std::move(entities), std::move(relations), std::move(triples));
}

}  // namespace

IdMap IdMap::identity(std::size_t count) {
  IdMap ids;
  for (std::size_t i = 0; i < count; ++i) ids.add(static_cast<std::int64_t>(i), std::to_string(i));
  return ids;
}

std::uint32_t IdMap::add(std::int64_t file_id, std::string name) {
  const auto dense = static_cast<std::uint32_t>(file_ids_.size());
  if (!index_.emplace(file_id, dense).second) {
    throw DataError("duplicate id definition " + std::to_string(file_id));
  }
  file_ids_.push_back(file_id);
  names_.push_back(std::move(name));
  return dense;
}

std::optional<std::uint32_t> IdMap::dense(std::int64_t file_id) const {
  const auto it = index_.find(file_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

KnowledgeGraph::KnowledgeGraph(std::size_t entity_count, std::size_t relation_count,
                               std::vector<Triple> triples)
    : KnowledgeGraph(IdMap::identity(entity_count), IdMap::identity(relation_count), std::move(triples)) {}

KnowledgeGraph::KnowledgeGraph(IdMap entities, IdMap relations, std::vector<Triple> triples)
    : entities_(std::move(entities)), relations_(std::move(relations)), triples_(std::move(triples)) {
  for (const auto& t : triples_) {
    if (t.head >= entity_count() || t.tail >= entity_count() || t.relation >= relation_count()) {
      throw std::invalid_argument("triple references an id outside the graph");
    }
  }
  build_index();
}

void KnowledgeGraph::build_index() {
  const auto n = entity_count();
  const auto rel_count = static_cast<RelationId>(relation_count());
  offsets_.assign(n + 1, 0);
  for (const auto& t : triples_) {
    ++offsets_[t.head + 1];
    ++offsets_[t.tail + 1];
  }
  for (std::size_t i = 0; i < n; ++i) offsets_[i + 1] += offsets_[i];

  adjacency_.resize(offsets_[n]);
  std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
  linked_pairs_.clear();
  linked_pairs_.reserve(triples_.size());
  for (const auto& t : triples_) {
    adjacency_[cursor[t.head]++] = {t.relation, t.tail};
    adjacency_[cursor[t.tail]++] = {t.relation + rel_count, t.head};
    linked_pairs_.push_back(pair_key(t.head, t.tail));
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]),
              adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[i + 1]));
  }
  std::sort(linked_pairs_.begin(), linked_pairs_.end());
  linked_pairs_.erase(std::unique(linked_pairs_.begin(), linked_pairs_.end()), linked_pairs_.end());
}

std::span<const Edge> KnowledgeGraph::neighbors(EntityId entity) const {
  if (entity >= entity_count()) throw std::out_of_range("entity id " + std::to_string(entity));
  return {adjacency_.data() + offsets_[entity], offsets_[entity + 1] - offsets_[entity]};
}

std::size_t KnowledgeGraph::degree(EntityId entity) const { return neighbors(entity).size(); }

bool KnowledgeGraph::connected(EntityId a, EntityId b) const {
  return std::binary_search(linked_pairs_.begin(), linked_pairs_.end(), pair_key(a, b));
}

KnowledgeGraphPair load_kg_pair(const std::filesystem::path& dir) {
  KnowledgeGraphPair pair{read_graph(dir, 1), read_graph(dir, 2), {}};
  const auto ref_file = dir / "ref_ent_ids";
  for_each_row(ref_file, 2, [&](const auto& fields, std::size_t line_no) {
    const auto a = pair.g1.entity_ids().dense(parse_id(fields[0], ref_file, line_no));
    const auto b = pair.g2.entity_ids().dense(parse_id(fields[1], ref_file, line_no));
    if (!a || !b) {
      throw DataError(ref_file.string() + ":" + std::to_string(line_no) + ": dangling entity id");
    }
    pair.ref_pairs.emplace_back(*a, *b);
  });
  return pair;
}

namespace {

void write_ids(const IdMap& ids, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write " + file.string());
  for (std::uint32_t i = 0; i < ids.size(); ++i) out << ids.file_id(i) << '\t' << ids.name(i) << '\n';
}

void write_graph(const KnowledgeGraph& kg, const std::filesystem::path& dir, int which) {
  const auto suffix = "_" + std::to_string(which);
  write_ids(kg.entity_ids(), dir / ("ent_ids" + suffix));
  write_ids(kg.relation_ids(), dir / ("rel_ids" + suffix));
  std::ofstream out(dir / ("triples" + suffix));
  if (!out) throw DataError("cannot write triples into " + dir.string());
  for (const auto& t : kg.triples()) {
    out << kg.entity_ids().file_id(t.head) << '\t' << kg.relation_ids().file_id(t.relation) << '\t'
        << kg.entity_ids().file_id(t.tail) << '\n';
  }
}

}  // namespace

void save_kg_pair(const KnowledgeGraphPair& pair, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_graph(pair.g1, dir, 1);
  write_graph(pair.g2, dir, 2);
  std::ofstream out(dir / "ref_ent_ids");
  if (!out) throw DataError("cannot write ref_ent_ids into " + dir.string());
  for (const auto& [a, b] : pair.ref_pairs) {
    out << pair.g1.entity_ids().file_id(a) << '\t' << pair.g2.entity_ids().file_id(b) << '\n';
  }
}

}  // namespace unea
