#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tet/kg_data.hpp"

namespace tet {

/// optimistic: only strictly better competitors count.
/// mean: ties count half, so a constant scorer no longer ranks first.
enum class TiePolicy { optimistic, mean };
TiePolicy parse_tie_policy(const std::string& s);

struct RankingQuery {
  EntityId entity = 0;
  TypeId gold = 0;
  std::span<const double> scores;
  /// filtered[k] != 0 removes type k from the competition (other known
  /// positives of the entity). The gold type is never a competitor.
  std::span<const std::uint8_t> filtered;
};

/// 1 + #{k ∉ filter, k ≠ gold : score[k] > score[gold]}, plus half the ties
/// under TiePolicy::mean.
double filtered_rank(const RankingQuery& q, TiePolicy policy = TiePolicy::optimistic);

double mrr(std::span<const double> ranks);
double hits_at_k(std::span<const double> ranks, std::size_t k);

struct MetricsReport {
  std::size_t queries = 0;
  double mrr = 0.0;
  double hit1 = 0.0;
  double hit3 = 0.0;
  double hit10 = 0.0;

  std::string to_json() const;
  bool operator==(const MetricsReport&) const = default;
};

MetricsReport summarize(std::span<const double> ranks);

struct QueryResult {
  EntityId entity;
  TypeId type;
  double rank;
};

/// Pooled type scores for one entity (higher = more likely).
using EntityScorer = std::function<std::vector<double>(EntityId)>;

/// One filtered ranking query per assertion of `split`; the filter is every
/// type asserted for the entity in train ∪ valid ∪ test. Each entity is scored
/// once and all of its queries share that vector.
MetricsReport evaluate_split(const KnowledgeGraph& kg, Split split, const EntityScorer& scorer,
                             TiePolicy policy = TiePolicy::optimistic,
                             std::vector<QueryResult>* per_query = nullptr);

/// Writes `entity,type,rank` rows with dataset labels.
void write_query_csv(const std::filesystem::path& path, const KnowledgeGraph& kg,
                     std::span<const QueryResult> results);

}  // namespace tet
