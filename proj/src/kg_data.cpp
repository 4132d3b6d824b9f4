#include "tet/kg_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_set>

namespace tet {

std::uint32_t LabelTable::add(const std::string& label) {
  auto [it, inserted] = ids_.emplace(label, static_cast<std::uint32_t>(labels_.size()));
  if (inserted) labels_.push_back(label);
  return it->second;
}

std::optional<std::uint32_t> LabelTable::find(const std::string& label) const {
  auto it = ids_.find(label);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t LabelTable::at(const std::string& label) const {
  auto id = find(label);
  if (!id) throw ArgumentError("unknown label '" + label + "'");
  return *id;
}

std::uint64_t LabelTable::fingerprint() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ull;
  };
  for (const auto& l : labels_) {
    for (unsigned char c : l) mix(c);
    mix('\n');
  }
  return h;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::valid:
      return "valid";
    case Split::test:
      return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "valid") return Split::valid;
  if (name == "test") return Split::test;
  throw ArgumentError("unknown split '" + name + "' (expected train, valid or test)");
}

ClassRule ClassRule::parse(const std::string& text) {
  if (text == "first-path-segment") return {Kind::first_path_segment, 1};
  if (text == "whole-label") return {Kind::whole_label, 0};
  const std::string prefix = "prefix-depth:";
  if (text.rfind(prefix, 0) == 0) {
    std::size_t depth = 0;
    try {
      depth = std::stoul(text.substr(prefix.size()));
    } catch (const std::exception&) {
      throw ArgumentError("bad class rule '" + text + "'");
    }
    if (depth == 0) throw ArgumentError("class rule depth must be positive");
    return {Kind::prefix_depth, depth};
  }
  throw ArgumentError("unknown class rule '" + text +
                      "' (expected first-path-segment, whole-label or prefix-depth:K)");
}

std::string ClassRule::to_string() const {
  switch (kind) {
    case Kind::first_path_segment:
      return "first-path-segment";
    case Kind::whole_label:
      return "whole-label";
    case Kind::prefix_depth:
      return "prefix-depth:" + std::to_string(depth);
  }
  return "?";
}

std::string class_label(const std::string& type_label, const ClassRule& rule) {
  if (type_label.empty()) throw ArgumentError("empty type label");
  if (rule.kind == ClassRule::Kind::whole_label) return type_label;
  const std::size_t depth = rule.kind == ClassRule::Kind::first_path_segment ? 1 : rule.depth;
  std::vector<std::string> segments;
  std::size_t pos = 0;
  while (pos <= type_label.size()) {
    std::size_t next = type_label.find('/', pos);
    if (next == std::string::npos) next = type_label.size();
    if (next > pos) segments.push_back(type_label.substr(pos, next - pos));
    pos = next + 1;
  }
  if (segments.empty()) throw ArgumentError("type label '" + type_label + "' has no path segment");
  std::string out;
  for (std::size_t i = 0; i < std::min(depth, segments.size()); ++i) {
    if (i) out += '/';
    out += segments[i];
  }
  return out;
}

namespace {

ClassMap assemble_classmap(std::span<const std::string> per_type_class, RelationId first_relation) {
  ClassMap map;
  map.type_to_class.reserve(per_type_class.size());
  for (const auto& c : per_type_class) map.type_to_class.push_back(map.classes.add(c));
  map.class_to_relation.resize(map.classes.size());
  std::iota(map.class_to_relation.begin(), map.class_to_relation.end(), first_relation);
  return map;
}

std::string class_relation_label(const std::string& cls) { return "belongs_class_" + cls; }

}  // namespace

ClassMap extract_classes(std::span<const std::string> type_labels, const ClassRule& rule,
                         RelationId first_relation) {
  std::vector<std::string> per_type;
  per_type.reserve(type_labels.size());
  for (const auto& t : type_labels) per_type.push_back(class_label(t, rule));
  return assemble_classmap(per_type, first_relation);
}

std::size_t NeighborIndex::relational_edges() const {
  std::size_t n = 0;
  for (const auto& l : relational) n += l.size();
  return n;
}

void KnowledgeGraph::index_assertions() {
  for (auto& s : by_split_) s.assign(num_entities(), {});
  for (const auto& a : assertions) by_split_[static_cast<std::size_t>(a.split)][a.entity].push_back(a.type);
}

std::vector<EntityId> KnowledgeGraph::entities_with(Split s) const {
  std::vector<EntityId> out;
  const auto& lists = by_split_[static_cast<std::size_t>(s)];
  for (EntityId e = 0; e < lists.size(); ++e)
    if (!lists[e].empty()) out.push_back(e);
  return out;
}

std::size_t KnowledgeGraph::active_relation_count() const {
  std::vector<bool> seen(vocab.dataset_relations, false);
  for (const auto& t : triples) seen[t.rel] = true;
  return static_cast<std::size_t>(std::count(seen.begin(), seen.end(), true));
}

DatasetStats KnowledgeGraph::stats() const {
  DatasetStats s;
  s.entities = vocab.entities.size();
  s.relations = vocab.dataset_relations;
  s.types = vocab.types.size();
  s.clusters = classmap.classes.size();
  s.train_triples = triples.size();
  for (const auto& a : assertions) {
    switch (a.split) {
      case Split::train:
        ++s.train_tuples;
        break;
      case Split::valid:
        ++s.valid;
        break;
      case Split::test:
        ++s.test;
        break;
    }
  }
  return s;
}

NeighborIndex build_neighbor_index(const KnowledgeGraph& kg, bool include_inverse) {
  NeighborIndex idx;
  idx.relational.assign(kg.num_entities(), {});
  idx.typeclass.assign(kg.num_entities(), {});
  for (const auto& t : kg.triples) {
    idx.relational[t.head].push_back({t.rel, t.tail});
    if (include_inverse) idx.relational[t.tail].push_back({kg.vocab.inverse_of(t.rel), t.head});
  }
  for (const auto& a : kg.assertions) {
    if (a.split != Split::train) continue;
    idx.typeclass[a.entity].push_back({kg.classmap.relation_of_type(a.type), a.type});
  }
  return idx;
}

KnowledgeGraph build_graph(const RawDataset& raw, const LoadOptions& options) {
  KnowledgeGraph kg;
  auto& v = kg.vocab;
  for (const auto& t : raw.triples) {
    v.entities.add(t[0]);
    v.entities.add(t[2]);
  }
  for (const auto& t : raw.tuples[0]) v.entities.add(t[0]);
  for (std::size_t s = 1; s < 3; ++s)
    for (const auto& t : raw.tuples[s]) {
      if (!v.entities.find(t[0])) {
        if (options.unknown_entities == UnknownEntityPolicy::reject)
          throw LoadError(std::string("unknown entity '") + t[0] + "' in " +
                          split_name(static_cast<Split>(s)) + " assertions");
        v.entities.add(t[0]);
      }
    }

  for (const auto& t : raw.triples) v.relations.add(t[1]);
  v.dataset_relations = v.relations.size();
  v.has_inverse = options.include_inverse;
  if (options.include_inverse) {
    for (RelationId r = 0; r < v.dataset_relations; ++r) {
      const std::string inv = v.relations.label(r) + "^-1";
      if (v.relations.find(inv))
        throw LoadError("relation label '" + inv + "' collides with a synthesized inverse");
      v.relations.add(inv);
    }
  }

  for (const auto& split : raw.tuples)
    for (const auto& t : split) v.types.add(t[1]);

  std::unordered_map<std::string, std::string> overrides;
  for (const auto& [type, cls] : raw.classmap) overrides[type] = cls;
  std::vector<std::string> per_type;
  for (const auto& label : v.types.labels()) {
    auto it = overrides.find(label);
    per_type.push_back(it != overrides.end() ? it->second : class_label(label, options.class_rule));
  }
  kg.classmap = assemble_classmap(per_type, v.first_class_relation());
  for (const auto& cls : kg.classmap.classes.labels()) {
    const std::string label = class_relation_label(cls);
    if (v.relations.find(label))
      throw LoadError("class relation '" + label + "' collides with a dataset relation");
    v.relations.add(label);
  }
  v.classes = kg.classmap.classes;

  kg.triples.reserve(raw.triples.size());
  for (const auto& t : raw.triples)
    kg.triples.push_back({v.entities.at(t[0]), v.relations.at(t[1]), v.entities.at(t[2])});

  for (std::size_t s = 0; s < 3; ++s) {
    std::set<std::pair<EntityId, TypeId>> seen;
    for (const auto& t : raw.tuples[s]) {
      const EntityId e = v.entities.at(t[0]);
      const TypeId ty = v.types.at(t[1]);
      if (seen.insert({e, ty}).second) kg.assertions.push_back({e, ty, static_cast<Split>(s)});
    }
  }
  kg.index_assertions();
  kg.neighbors = build_neighbor_index(kg, options.include_inverse);
  return kg;
}

namespace {

template <std::size_t N>
std::vector<std::array<std::string, N>> read_tsv(const std::filesystem::path& path, const std::string& what,
                                                 const std::unordered_set<std::string>* known,
                                                 bool reject_unknown) {
  std::ifstream in(path);
  if (!in) throw LoadError("missing " + what + " file: " + path.string());
  std::vector<std::array<std::string, N>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<std::string, N> row;
    std::size_t field = 0, pos = 0;
    while (true) {
      const std::size_t tab = line.find('\t', pos);
      const std::string cell = line.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos);
      if (field < N) row[field] = cell;
      ++field;
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    if (field != N)
      throw ParseError(
          path.string(), lineno,
          "expected " + std::to_string(N) + " tab-separated fields, got " + std::to_string(field));
    for (const auto& cell : row)
      if (cell.empty()) throw ParseError(path.string(), lineno, "empty field");
    if (known && reject_unknown && !known->contains(row[0]))
      throw ParseError(path.string(), lineno, "unknown entity '" + row[0] + "'");
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

KnowledgeGraph load_dataset(const std::filesystem::path& dir, const LoadOptions& options) {
  RawDataset raw;
  raw.triples = read_tsv<3>(dir / "train_triples.txt", "train triples", nullptr, false);
  raw.tuples[0] = read_tsv<2>(dir / "train_tuples.txt", "train tuples", nullptr, false);

  std::unordered_set<std::string> known;
  for (const auto& t : raw.triples) {
    known.insert(t[0]);
    known.insert(t[2]);
  }
  for (const auto& t : raw.tuples[0]) known.insert(t[0]);
  const bool reject = options.unknown_entities == UnknownEntityPolicy::reject;
  raw.tuples[1] = read_tsv<2>(dir / "valid_tuples.txt", "valid tuples", &known, reject);
  raw.tuples[2] = read_tsv<2>(dir / "test_tuples.txt", "test tuples", &known, reject);

  if (std::filesystem::exists(dir / "classmap.tsv"))
    raw.classmap = read_tsv<2>(dir / "classmap.tsv", "class map", nullptr, false);
  return build_graph(raw, options);
}

NeighborSample sample_neighbors(const KnowledgeGraph& kg, EntityId e, std::size_t k_type, std::size_t k_rel,
                                std::mt19937_64& rng) {
  NeighborSample out;
  const auto& tc = kg.neighbors.typeclass[e];
  const auto& rel = kg.neighbors.relational[e];
  std::sample(tc.begin(), tc.end(), std::back_inserter(out.typeclass), k_type, rng);
  std::sample(rel.begin(), rel.end(), std::back_inserter(out.relational), k_rel, rng);
  return out;
}

NeighborSample all_neighbors(const KnowledgeGraph& kg, EntityId e) {
  return {kg.neighbors.typeclass[e], kg.neighbors.relational[e]};
}

KnowledgeGraph drop_neighbors(const KnowledgeGraph& kg, double rate, DropMode mode, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw ArgumentError("drop rate must lie in [0, 1), got " + std::to_string(rate));
  KnowledgeGraph out = kg;
  if (mode == DropMode::relational_neighbors) {
    const std::size_t total = kg.neighbors.relational_edges();
    const auto n_drop = static_cast<std::size_t>(std::floor(rate * static_cast<double>(total)));
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> dropped(total, false);
    for (std::size_t i = 0; i < n_drop; ++i) dropped[order[i]] = true;
    std::size_t flat = 0;
    for (auto& list : out.neighbors.relational) {
      std::vector<RelNeighbor> kept;
      for (const auto& nb : list)
        if (!dropped[flat++]) kept.push_back(nb);
      list = std::move(kept);
    }
    return out;
  }

  std::vector<RelationId> active;
  {
    std::vector<bool> seen(kg.vocab.dataset_relations, false);
    for (const auto& t : kg.triples) seen[t.rel] = true;
    for (RelationId r = 0; r < seen.size(); ++r)
      if (seen[r]) active.push_back(r);
  }
  const auto n_drop = static_cast<std::size_t>(std::floor(rate * static_cast<double>(active.size())));
  std::shuffle(active.begin(), active.end(), rng);
  std::vector<bool> removed(kg.vocab.dataset_relations, false);
  for (std::size_t i = 0; i < n_drop; ++i) removed[active[i]] = true;
  std::erase_if(out.triples, [&](const Triple& t) { return removed[t.rel]; });
  out.neighbors = build_neighbor_index(out, kg.vocab.has_inverse);
  return out;
}

std::vector<std::uint8_t> positive_label_row(const KnowledgeGraph& kg, EntityId e, SplitSet splits) {
  std::vector<std::uint8_t> row(kg.num_types(), 0);
  for (Split s : {Split::train, Split::valid, Split::test}) {
    if (!splits.contains(s)) continue;
    for (TypeId t : kg.types_of(e, s)) row[t] = 1;
  }
  return row;
}

}  // namespace tet
