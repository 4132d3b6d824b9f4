#pragma once

#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tet/kg_data.hpp"
#include "tet/pooling_loss.hpp"
#include "tet/transformer.hpp"

namespace tet {

enum class RseMode { off, avg, max, min };
RseMode parse_rse_mode(const std::string& s);
const char* rse_mode_name(RseMode m);

enum class SequenceKind { typeclass_local, relational_local, global, relation_enhancement, context };
const char* sequence_kind_name(SequenceKind k);

struct ModelConfig {
  EncoderConfig encoder;
  bool use_local = true;
  bool use_global = true;
  bool use_context = true;
  /// Rewrite (has_type, c) neighbors as (r_class(c), c).
  bool use_class = true;
  RseMode rse = RseMode::off;
  /// Typed neighbors of a tail entity used to enhance a relation.
  std::size_t rse_type_cap = 3;
  /// Neighbor pairs that fit in the global and context sequences; longer
  /// neighbor lists are truncated (type-class pairs first).
  std::size_t max_pairs = 64;
};

/// Unified token space: [CLS], has_type, entities, relations (dataset,
/// inverse and class relations, in relation-id order), types.
class TokenVocabulary {
 public:
  enum class Kind { cls, has_type, entity, relation, class_relation, type };
  static constexpr std::size_t kCls = 0;
  static constexpr std::size_t kHasType = 1;

  TokenVocabulary() = default;
  TokenVocabulary(std::size_t entities, std::size_t relations, std::size_t types,
                  std::size_t first_class_relation)
      : entities_(entities), relations_(relations), types_(types), first_class_(first_class_relation) {}

  std::size_t entity(EntityId e) const { return 2 + e; }
  std::size_t relation(RelationId r) const { return 2 + entities_ + r; }
  std::size_t type(TypeId t) const { return 2 + entities_ + relations_ + t; }
  std::size_t size() const { return 2 + entities_ + relations_ + types_; }
  Kind kind(std::size_t token) const;

 private:
  std::size_t entities_ = 0, relations_ = 0, types_ = 0, first_class_ = 0;
};

/// Token sequences of one kind, right-padded to a common length. Positions
/// run 0..len-1; mask marks the non-pad prefix.
struct SequenceBatch {
  SequenceKind kind = SequenceKind::typeclass_local;
  std::vector<std::vector<std::size_t>> tokens;
  std::vector<std::vector<std::size_t>> positions;
  std::vector<std::vector<bool>> masks;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  void push(std::vector<std::size_t> seq);
  bool operator==(const SequenceBatch&) const = default;
};

/// H = ([CLS], r_class, c) per type-class neighbor and Q = ([CLS], r, f) per
/// relational neighbor. Without class rewriting r_class becomes has_type.
std::pair<SequenceBatch, SequenceBatch> build_local_sequences(const TokenVocabulary& tokens,
                                                              const NeighborSample& sample, bool use_class);

/// G = ([CLS], r_class1, c1, ..., r_m, f_m): type-class pairs, then relational
/// pairs, truncated to `max_pairs`. With no neighbors: ([CLS], e).
SequenceBatch build_global_sequence(const TokenVocabulary& tokens, EntityId e, const NeighborSample& sample,
                                    bool use_class, std::size_t max_pairs);

/// P = (r, r_class1, c1, ..., r_classℓ, cℓ) over the first `cap` type-class
/// neighbors of `f`; empty when f has none.
std::vector<std::size_t> build_enhancement_sequence(const TokenVocabulary& tokens, const KnowledgeGraph& kg,
                                                    RelationId r, EntityId f, bool use_class,
                                                    std::size_t cap);

enum class SourceKind { typeclass_local, relational_local, global, context };

/// Per-source type scores, one row per source (sources × L). Rows are ordered
/// type-class locals, relational locals, global, context.
template <typename T>
struct ScoreSet {
  Var<T> scores;
  std::vector<SourceKind> sources;

  std::size_t count() const { return sources.size(); }
  bool empty() const { return sources.empty(); }
  std::size_t count_of(SourceKind k) const {
    return static_cast<std::size_t>(std::count(sources.begin(), sources.end(), k));
  }
};

struct ModelShape {
  std::size_t entities = 0;
  std::size_t relations = 0;
  std::size_t types = 0;
  std::size_t first_class_relation = 0;

  static ModelShape of(const KnowledgeGraph& kg) {
    return {kg.num_entities(), kg.vocab.relations.size(), kg.num_types(), kg.vocab.first_class_relation()};
  }
  bool operator==(const ModelShape&) const = default;
};

/// Aggregates the (ℓ' × d) encoder outputs of a P sequence into one row.
template <typename T>
Var<T> aggregate_rows(Var<T> outputs, RseMode mode) {
  switch (mode) {
    case RseMode::max:
      return ops::max_rows(outputs);
    case RseMode::min:
      return ops::min_rows(outputs);
    case RseMode::avg:
    case RseMode::off:
      break;
  }
  return ops::mean_rows(outputs);
}

template <typename T>
class TetModel {
 public:
  TetModel(const ModelShape& shape, const ModelConfig& cfg, std::uint64_t seed)
      : shape_(shape),
        cfg_(cfg),
        tokens_(shape.entities, shape.relations, shape.types, shape.first_class_relation) {
    cfg_.encoder.validate();
    require(shape.types > 0, "model needs at least one type");
    std::mt19937_64 rng(seed);
    const std::size_t d = cfg_.encoder.model_dim;
    const double emb_std = 1.0 / std::sqrt(static_cast<double>(d));
    word_ = params_.add("embed.word", normal_init<T>(tokens_.size(), d, emb_std, rng));
    pos_typeclass_ = params_.add("embed.pos.typeclass_local", normal_init<T>(3, d, emb_std, rng));
    pos_relational_ = params_.add("embed.pos.relational_local", normal_init<T>(3, d, emb_std, rng));
    pos_global_ = params_.add("embed.pos.global", normal_init<T>(1 + 2 * cfg_.max_pairs, d, emb_std, rng));
    pos_context_ = params_.add("embed.pos.context", normal_init<T>(2 + cfg_.max_pairs, d, emb_std, rng));
    pos_enhance_ = params_.add("embed.pos.relation_enhancement",
                               normal_init<T>(1 + 2 * cfg_.rse_type_cap, d, emb_std, rng));
    local_ = EncoderParams::create(params_, "encoder.local", cfg_.encoder, rng);
    global_ = EncoderParams::create(params_, "encoder.global", cfg_.encoder, rng);
    context_ = EncoderParams::create(params_, "encoder.context", cfg_.encoder, rng);
    enhance_ = EncoderParams::create(params_, "encoder.relation_enhancement", cfg_.encoder, rng);
    head_w_ = params_.add("head.weight", xavier_uniform<T>(shape.types, d, rng));
    head_b_ = params_.add("head.bias", Tensor<T>::matrix(1, shape.types));
  }

  const ModelConfig& config() const { return cfg_; }
  const ModelShape& shape() const { return shape_; }
  const TokenVocabulary& tokens() const { return tokens_; }
  ParameterStore<T>& params() { return params_; }
  const ParameterStore<T>& params() const { return params_; }
  std::size_t head_weight_index() const { return head_w_; }
  std::size_t head_bias_index() const { return head_b_; }
  std::size_t word_index() const { return word_; }

  /// Runs every enabled module for entity `e` over `sample` and returns the
  /// per-source score rows W·ReLU(cls) + b. Empty when no enabled module has
  /// input (local-only model, entity without neighbors).
  ScoreSet<T> score_sources(ParamBinder<T>& bind, const KnowledgeGraph& kg, EntityId e,
                            const NeighborSample& sample, const ForwardContext& ctx) const {
    Forward f{*this, bind, kg, ctx, {}};
    std::vector<Var<T>> cls_rows;
    ScoreSet<T> out;

    std::vector<Var<T>> local_cls;
    if (cfg_.use_local || cfg_.use_context) local_cls = f.locals(sample);
    if (cfg_.use_local) {
      const std::size_t n = sample.typeclass.size();
      for (std::size_t i = 0; i < local_cls.size(); ++i) {
        cls_rows.push_back(local_cls[i]);
        out.sources.push_back(i < n ? SourceKind::typeclass_local : SourceKind::relational_local);
      }
    }
    if (cfg_.use_global) {
      cls_rows.push_back(f.global(e, sample));
      out.sources.push_back(SourceKind::global);
    }
    if (cfg_.use_context) {
      cls_rows.push_back(f.context(e, local_cls));
      out.sources.push_back(SourceKind::context);
    }
    if (cls_rows.empty()) return out;
    Var<T> stacked = cls_rows.size() == 1 ? cls_rows.front() : ops::concat_rows(cls_rows);
    out.scores = ops::add_row(ops::matmul_bt(ops::relu(stacked), bind(head_w_)), bind(head_b_));
    return out;
  }

  /// Pooled type logits S_e (1×L). Without any score source the row is the
  /// head bias, i.e. W·ReLU(0) + b.
  Var<T> logits(ParamBinder<T>& bind, const KnowledgeGraph& kg, EntityId e, const NeighborSample& sample,
                const ForwardContext& ctx, T alpha) const {
    ScoreSet<T> s = score_sources(bind, kg, e, sample, ctx);
    if (s.empty()) return bind(head_b_);
    return exp_weighted_pool(s.scores, alpha);
  }

  /// Eval-mode pooled logits as plain values.
  std::vector<double> score(const KnowledgeGraph& kg, EntityId e, const NeighborSample& sample,
                            double alpha) const {
    Tape<T> tape(false);
    ParamBinder<T> bind(tape, params_, nullptr);
    const Var<T> out = logits(bind, kg, e, sample, ForwardContext{}, static_cast<T>(alpha));
    const auto& v = out.value();
    return std::vector<double>(v.data().begin(), v.data().end());
  }

  /// Embeds a token sequence: word rows (or caller-supplied replacements)
  /// plus position rows from `pos_table`.
  Var<T> embed(ParamBinder<T>& bind, const std::vector<std::size_t>& toks, std::size_t pos_table) const {
    std::vector<std::size_t> pos(toks.size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i;
    return ops::add(ops::embedding(bind(word_), toks), ops::embedding(bind(pos_table), pos));
  }

 private:
  struct Forward {
    const TetModel& m;
    ParamBinder<T>& bind;
    const KnowledgeGraph& kg;
    const ForwardContext& ctx;
    std::map<std::pair<RelationId, EntityId>, Var<T>> enhanced;

    const EncoderConfig& enc() const { return m.cfg_.encoder; }

    Var<T> word_row(std::size_t token) { return ops::embedding(bind(m.word_), {token}); }

    Var<T> positions(std::size_t table, std::size_t n) {
      std::vector<std::size_t> pos(n);
      for (std::size_t i = 0; i < n; ++i) pos[i] = i;
      return ops::embedding(bind(table), pos);
    }

    /// Word row standing in for relation r inside a sequence that pairs it with f.
    Var<T> relation_row(RelationId r, EntityId f) {
      if (m.cfg_.rse == RseMode::off) return word_row(m.tokens_.relation(r));
      auto key = std::make_pair(r, f);
      if (auto it = enhanced.find(key); it != enhanced.end()) return it->second;
      const auto toks =
          build_enhancement_sequence(m.tokens_, kg, r, f, m.cfg_.use_class, m.cfg_.rse_type_cap);
      Var<T> row;
      if (toks.empty()) {
        row = word_row(m.tokens_.relation(r));
      } else {
        const Var<T> in = m.embed(bind, toks, m.pos_enhance_);
        const Var<T> outp = encode(in, {}, enc(), m.enhance_, bind, ctx);
        row = aggregate_rows(outp, m.cfg_.rse);
      }
      enhanced.emplace(key, row);
      return row;
    }

    Var<T> run(const std::vector<Var<T>>& rows, std::size_t pos_table, const EncoderParams& encp) {
      const Var<T> words = ops::concat_rows(rows);
      const Var<T> in = ops::add(words, positions(pos_table, rows.size()));
      return cls_of(encode(in, {}, enc(), encp, bind, ctx));
    }

    std::vector<Var<T>> locals(const NeighborSample& sample) {
      const auto [tc, rel] = build_local_sequences(m.tokens_, sample, m.cfg_.use_class);
      std::vector<Var<T>> out;
      for (const auto& seq : tc.tokens) {
        const Var<T> in = m.embed(bind, seq, m.pos_typeclass_);
        out.push_back(cls_of(encode(in, {}, enc(), m.local_, bind, ctx)));
      }
      for (std::size_t i = 0; i < rel.tokens.size(); ++i) {
        const auto& seq = rel.tokens[i];
        if (m.cfg_.rse == RseMode::off) {
          const Var<T> in = m.embed(bind, seq, m.pos_relational_);
          out.push_back(cls_of(encode(in, {}, enc(), m.local_, bind, ctx)));
        } else {
          const auto& nb = sample.relational[i];
          out.push_back(run({word_row(seq[0]), relation_row(nb.rel, nb.entity), word_row(seq[2])},
                            m.pos_relational_, m.local_));
        }
      }
      return out;
    }

    Var<T> global(EntityId e, const NeighborSample& sample) {
      const SequenceBatch g = build_global_sequence(m.tokens_, e, sample, m.cfg_.use_class, m.cfg_.max_pairs);
      const auto& seq = g.tokens.front();
      if (m.cfg_.rse == RseMode::off) {
        const Var<T> in = m.embed(bind, seq, m.pos_global_);
        return cls_of(encode(in, {}, enc(), m.global_, bind, ctx));
      }
      // Relational pairs follow the type-class pairs; swap in enhanced rows.
      const std::size_t n_tc = std::min(sample.typeclass.size(), m.cfg_.max_pairs);
      const std::size_t n_rel = std::min(sample.relational.size(), m.cfg_.max_pairs - n_tc);
      std::vector<Var<T>> rows;
      rows.reserve(seq.size());
      for (std::size_t i = 0; i < 1 + 2 * n_tc && i < seq.size(); ++i) rows.push_back(word_row(seq[i]));
      if (n_tc + n_rel == 0) rows.push_back(word_row(seq[1]));
      for (std::size_t j = 0; j < n_rel; ++j) {
        const auto& nb = sample.relational[j];
        rows.push_back(relation_row(nb.rel, nb.entity));
        rows.push_back(word_row(m.tokens_.entity(nb.entity)));
      }
      return run(rows, m.pos_global_, m.global_);
    }

    Var<T> context(EntityId e, const std::vector<Var<T>>& local_cls) {
      std::vector<Var<T>> rows{word_row(TokenVocabulary::kCls), word_row(m.tokens_.entity(e))};
      const std::size_t n = std::min(local_cls.size(), m.cfg_.max_pairs);
      rows.insert(rows.end(), local_cls.begin(), local_cls.begin() + static_cast<std::ptrdiff_t>(n));
      return run(rows, m.pos_context_, m.context_);
    }
  };

  ModelShape shape_;
  ModelConfig cfg_;
  TokenVocabulary tokens_;
  ParameterStore<T> params_;
  std::size_t word_ = 0, pos_typeclass_ = 0, pos_relational_ = 0, pos_global_ = 0, pos_context_ = 0,
              pos_enhance_ = 0, head_w_ = 0, head_b_ = 0;
  EncoderParams local_, global_, context_, enhance_;
};

}  // namespace tet
