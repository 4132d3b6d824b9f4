#include "tet/evaluation.hpp"

#include <fstream>

#include "json.hpp"
#include "tet/tensor.hpp"

namespace tet {

TiePolicy parse_tie_policy(const std::string& s) {
  if (s == "optimistic") return TiePolicy::optimistic;
  if (s == "mean") return TiePolicy::mean;
  throw ArgumentError("unknown tie policy '" + s + "' (expected optimistic or mean)");
}

double filtered_rank(const RankingQuery& q, TiePolicy policy) {
  require(q.gold < q.scores.size(), "filtered_rank: gold type out of range");
  require(q.filtered.empty() || q.filtered.size() == q.scores.size(),
          "filtered_rank: filter length does not match scores");
  const double gold = q.scores[q.gold];
  std::size_t greater = 0, ties = 0;
  for (std::size_t k = 0; k < q.scores.size(); ++k) {
    if (k == q.gold || (!q.filtered.empty() && q.filtered[k])) continue;
    if (q.scores[k] > gold)
      ++greater;
    else if (q.scores[k] == gold)
      ++ties;
  }
  double rank = 1.0 + static_cast<double>(greater);
  if (policy == TiePolicy::mean) rank += 0.5 * static_cast<double>(ties);
  return rank;
}

double mrr(std::span<const double> ranks) {
  require(!ranks.empty(), "mrr: no ranks");
  double s = 0.0;
  for (double r : ranks) s += 1.0 / r;
  return s / static_cast<double>(ranks.size());
}

double hits_at_k(std::span<const double> ranks, std::size_t k) {
  require(k >= 1, "hits_at_k: k must be at least 1");
  if (ranks.empty()) return 0.0;
  std::size_t hits = 0;
  for (double r : ranks)
    if (r <= static_cast<double>(k)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

MetricsReport summarize(std::span<const double> ranks) {
  MetricsReport m;
  m.queries = ranks.size();
  if (ranks.empty()) return m;
  m.mrr = mrr(ranks);
  m.hit1 = hits_at_k(ranks, 1);
  m.hit3 = hits_at_k(ranks, 3);
  m.hit10 = hits_at_k(ranks, 10);
  return m;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["queries"] = queries;
  j["mrr"] = mrr;
  j["hit@1"] = hit1;
  j["hit@3"] = hit3;
  j["hit@10"] = hit10;
  return j.dump();
}

MetricsReport evaluate_split(const KnowledgeGraph& kg, Split split, const EntityScorer& scorer,
                             TiePolicy policy, std::vector<QueryResult>* per_query) {
  std::vector<double> ranks;
  for (EntityId e : kg.entities_with(split)) {
    const std::vector<double> scores = scorer(e);
    require(scores.size() == kg.num_types(), [&] {
      return "scorer returned " + std::to_string(scores.size()) + " scores for " +
             std::to_string(kg.num_types()) + " types";
    });
    const auto known = positive_label_row(kg, e, SplitSet::all());
    for (TypeId gold : kg.types_of(e, split)) {
      const double r = filtered_rank({e, gold, scores, known}, policy);
      ranks.push_back(r);
      if (per_query) per_query->push_back({e, gold, r});
    }
  }
  return summarize(ranks);
}

void write_query_csv(const std::filesystem::path& path, const KnowledgeGraph& kg,
                     std::span<const QueryResult> results) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write " + path.string());
  out << "entity,type,rank\n";
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  for (const auto& r : results)
    out << quote(kg.vocab.entities.label(r.entity)) << ',' << quote(kg.vocab.types.label(r.type)) << ','
        << r.rank << '\n';
}

}  // namespace tet
