#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace tet {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;
using TypeId = std::uint32_t;
using ClassId = std::uint32_t;

/// Dataset files are missing or unreadable.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A line of a dataset file could not be parsed.
class ParseError : public LoadError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : LoadError(file + ":" + std::to_string(line) + ": " + what), file_(file), line_(line) {}
  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Bijective label <-> dense id table.
class LabelTable {
 public:
  std::uint32_t add(const std::string& label);
  std::optional<std::uint32_t> find(const std::string& label) const;
  std::uint32_t at(const std::string& label) const;
  const std::string& label(std::uint32_t id) const { return labels_.at(id); }
  std::size_t size() const { return labels_.size(); }
  std::span<const std::string> labels() const { return labels_; }
  /// FNV-1a over the labels in id order.
  std::uint64_t fingerprint() const;

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

/// Relation ids are laid out in contiguous blocks: dataset relations, then
/// (when enabled) their inverses in the same order, then one class relation
/// per type class.
struct Vocabularies {
  LabelTable entities;
  LabelTable relations;
  LabelTable types;
  LabelTable classes;
  std::size_t dataset_relations = 0;
  bool has_inverse = false;

  RelationId inverse_of(RelationId r) const { return static_cast<RelationId>(r + dataset_relations); }
  RelationId first_class_relation() const {
    return static_cast<RelationId>(dataset_relations * (has_inverse ? 2 : 1));
  }
};

struct Triple {
  EntityId head;
  RelationId rel;
  EntityId tail;
  bool operator==(const Triple&) const = default;
};

enum class Split : std::uint8_t { train = 0, valid = 1, test = 2 };

const char* split_name(Split s);
Split parse_split(const std::string& name);

class SplitSet {
 public:
  constexpr SplitSet() = default;
  constexpr SplitSet(std::initializer_list<Split> splits) {
    for (Split s : splits) bits_ |= bit(s);
  }
  static constexpr SplitSet all() { return {Split::train, Split::valid, Split::test}; }
  constexpr bool contains(Split s) const { return (bits_ & bit(s)) != 0; }

 private:
  static constexpr std::uint8_t bit(Split s) { return std::uint8_t(1u << static_cast<unsigned>(s)); }
  std::uint8_t bits_ = 0;
};

struct TypeAssertion {
  EntityId entity;
  TypeId type;
  Split split;
  bool operator==(const TypeAssertion&) const = default;
};

struct ClassRule {
  enum class Kind { first_path_segment, whole_label, prefix_depth };
  Kind kind = Kind::first_path_segment;
  std::size_t depth = 1;

  static ClassRule parse(const std::string& text);
  std::string to_string() const;
};

struct ClassMap {
  LabelTable classes;
  std::vector<ClassId> type_to_class;
  std::vector<RelationId> class_to_relation;

  RelationId relation_of_type(TypeId t) const { return class_to_relation[type_to_class[t]]; }
};

/// Groups type labels into classes. Class relations are numbered
/// contiguously from `first_relation`.
ClassMap extract_classes(std::span<const std::string> type_labels, const ClassRule& rule,
                         RelationId first_relation = 0);

/// Class of one label under `rule`, e.g. "/medicine/disease" -> "medicine".
std::string class_label(const std::string& type_label, const ClassRule& rule);

struct RelNeighbor {
  RelationId rel;
  EntityId entity;
  bool operator==(const RelNeighbor&) const = default;
};

struct TypeNeighbor {
  RelationId rel;  // class relation of `type`
  TypeId type;
  bool operator==(const TypeNeighbor&) const = default;
};

struct NeighborIndex {
  std::vector<std::vector<RelNeighbor>> relational;
  std::vector<std::vector<TypeNeighbor>> typeclass;

  std::size_t relational_edges() const;
};

struct NeighborSample {
  std::vector<TypeNeighbor> typeclass;
  std::vector<RelNeighbor> relational;
  bool operator==(const NeighborSample&) const = default;
};

struct DatasetStats {
  std::size_t entities = 0;
  std::size_t relations = 0;
  std::size_t types = 0;
  std::size_t clusters = 0;
  std::size_t train_triples = 0;
  std::size_t train_tuples = 0;
  std::size_t valid = 0;
  std::size_t test = 0;
};

class KnowledgeGraph {
 public:
  Vocabularies vocab;
  std::vector<Triple> triples;
  std::vector<TypeAssertion> assertions;
  ClassMap classmap;
  NeighborIndex neighbors;

  std::size_t num_entities() const { return vocab.entities.size(); }
  std::size_t num_types() const { return vocab.types.size(); }

  /// Rebuilds the per-entity/per-split type lists after `assertions` changes.
  void index_assertions();
  std::span<const TypeId> types_of(EntityId e, Split s) const {
    return by_split_[static_cast<std::size_t>(s)][e];
  }
  /// Entities with at least one assertion in `s`, ascending.
  std::vector<EntityId> entities_with(Split s) const;

  /// Dataset relations that still have at least one triple.
  std::size_t active_relation_count() const;

  DatasetStats stats() const;

 private:
  std::array<std::vector<std::vector<TypeId>>, 3> by_split_;
};

enum class UnknownEntityPolicy { reject, add };

struct LoadOptions {
  bool include_inverse = true;
  ClassRule class_rule;
  UnknownEntityPolicy unknown_entities = UnknownEntityPolicy::reject;
};

/// Reads `train_triples.txt`, `{train,valid,test}_tuples.txt` and the optional
/// `classmap.tsv` (tab-separated, UTF-8, no header) from `dir`.
KnowledgeGraph load_dataset(const std::filesystem::path& dir, const LoadOptions& options = {});

/// Assembles a graph from in-memory labels, as load_dataset does from files.
/// Entities are registered in first-appearance order over triples then
/// assertions; `classmap` overrides the class rule for the listed types.
struct RawDataset {
  std::vector<std::array<std::string, 3>> triples;
  std::array<std::vector<std::array<std::string, 2>>, 3> tuples;
  std::vector<std::array<std::string, 2>> classmap;
};
KnowledgeGraph build_graph(const RawDataset& raw, const LoadOptions& options = {});

NeighborIndex build_neighbor_index(const KnowledgeGraph& kg, bool include_inverse);

/// Uniform sample without replacement of up to `k_type` type-class and `k_rel`
/// relational neighbors; original order is preserved within each group.
NeighborSample sample_neighbors(const KnowledgeGraph& kg, EntityId e, std::size_t k_type, std::size_t k_rel,
                                std::mt19937_64& rng);

/// Every neighbor of `e`, unsampled.
NeighborSample all_neighbors(const KnowledgeGraph& kg, EntityId e);

enum class DropMode { relational_neighbors, relation_types };

/// Returns a copy with ⌊rate·N⌋ relational neighbor entries (or dataset
/// relation types, with all of their edges) removed uniformly at random.
/// Type assertions are left alone.
KnowledgeGraph drop_neighbors(const KnowledgeGraph& kg, double rate, DropMode mode, std::mt19937_64& rng);

/// Bit k is set iff (e, k) is asserted in one of `splits`.
std::vector<std::uint8_t> positive_label_row(const KnowledgeGraph& kg, EntityId e, SplitSet splits);

}  // namespace tet
