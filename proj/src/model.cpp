#include "tet/model.hpp"

namespace tet {

RseMode parse_rse_mode(const std::string& s) {
  if (s == "off") return RseMode::off;
  if (s == "avg") return RseMode::avg;
  if (s == "max") return RseMode::max;
  if (s == "min") return RseMode::min;
  throw ArgumentError("unknown relation enhancement mode '" + s + "' (expected off, avg, max or min)");
}

const char* rse_mode_name(RseMode m) {
  switch (m) {
    case RseMode::off:
      return "off";
    case RseMode::avg:
      return "avg";
    case RseMode::max:
      return "max";
    case RseMode::min:
      return "min";
  }
  return "?";
}

const char* sequence_kind_name(SequenceKind k) {
  switch (k) {
    case SequenceKind::typeclass_local:
      return "typeclass-local";
    case SequenceKind::relational_local:
      return "relational-local";
    case SequenceKind::global:
      return "global";
    case SequenceKind::relation_enhancement:
      return "relation-enhancement";
    case SequenceKind::context:
      return "context";
  }
  return "?";
}

TokenVocabulary::Kind TokenVocabulary::kind(std::size_t token) const {
  require(token < size(), "token id " + std::to_string(token) + " out of range");
  if (token == kCls) return Kind::cls;
  if (token == kHasType) return Kind::has_type;
  if (token < 2 + entities_) return Kind::entity;
  if (token < 2 + entities_ + relations_)
    return token - 2 - entities_ >= first_class_ ? Kind::class_relation : Kind::relation;
  return Kind::type;
}

void SequenceBatch::push(std::vector<std::size_t> seq) {
  const std::size_t len = seq.size();
  std::size_t width = len;
  for (const auto& t : tokens) width = std::max(width, t.size());
  // Widen earlier rows if this one is longer.
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    while (tokens[i].size() < width) {
      positions[i].push_back(tokens[i].size());
      tokens[i].push_back(TokenVocabulary::kCls);
      masks[i].push_back(false);
    }
  }
  std::vector<std::size_t> pos(width);
  std::vector<bool> mask(width, false);
  for (std::size_t i = 0; i < width; ++i) {
    pos[i] = i;
    mask[i] = i < len;
  }
  seq.resize(width, TokenVocabulary::kCls);
  tokens.push_back(std::move(seq));
  positions.push_back(std::move(pos));
  masks.push_back(std::move(mask));
}

std::pair<SequenceBatch, SequenceBatch> build_local_sequences(const TokenVocabulary& tokens,
                                                              const NeighborSample& sample, bool use_class) {
  SequenceBatch tc, rel;
  tc.kind = SequenceKind::typeclass_local;
  rel.kind = SequenceKind::relational_local;
  for (const auto& nb : sample.typeclass) {
    const std::size_t r = use_class ? tokens.relation(nb.rel) : TokenVocabulary::kHasType;
    tc.push({TokenVocabulary::kCls, r, tokens.type(nb.type)});
  }
  for (const auto& nb : sample.relational)
    rel.push({TokenVocabulary::kCls, tokens.relation(nb.rel), tokens.entity(nb.entity)});
  return {std::move(tc), std::move(rel)};
}

SequenceBatch build_global_sequence(const TokenVocabulary& tokens, EntityId e, const NeighborSample& sample,
                                    bool use_class, std::size_t max_pairs) {
  SequenceBatch g;
  g.kind = SequenceKind::global;
  std::vector<std::size_t> seq{TokenVocabulary::kCls};
  std::size_t pairs = 0;
  for (const auto& nb : sample.typeclass) {
    if (pairs == max_pairs) break;
    seq.push_back(use_class ? tokens.relation(nb.rel) : TokenVocabulary::kHasType);
    seq.push_back(tokens.type(nb.type));
    ++pairs;
  }
  for (const auto& nb : sample.relational) {
    if (pairs == max_pairs) break;
    seq.push_back(tokens.relation(nb.rel));
    seq.push_back(tokens.entity(nb.entity));
    ++pairs;
  }
  if (pairs == 0) seq.push_back(tokens.entity(e));
  g.push(std::move(seq));
  return g;
}

std::vector<std::size_t> build_enhancement_sequence(const TokenVocabulary& tokens, const KnowledgeGraph& kg,
                                                    RelationId r, EntityId f, bool use_class,
                                                    std::size_t cap) {
  const auto& typed = kg.neighbors.typeclass[f];
  if (typed.empty() || cap == 0) return {};
  std::vector<std::size_t> seq{tokens.relation(r)};
  for (std::size_t i = 0; i < std::min(cap, typed.size()); ++i) {
    seq.push_back(use_class ? tokens.relation(typed[i].rel) : TokenVocabulary::kHasType);
    seq.push_back(tokens.type(typed[i].type));
  }
  return seq;
}

}  // namespace tet
