#include "tet/training.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace tet {

using nlohmann::ordered_json;

namespace {

const char* drop_mode_name(DropMode m) {
  return m == DropMode::relational_neighbors ? "relational-neighbors" : "relation-types";
}

DropMode parse_drop_mode(const std::string& s) {
  if (s == "relational-neighbors") return DropMode::relational_neighbors;
  if (s == "relation-types") return DropMode::relation_types;
  throw ArgumentError("unknown drop mode '" + s + "' (expected relational-neighbors or relation-types)");
}

const char* tie_policy_name(TiePolicy p) { return p == TiePolicy::optimistic ? "optimistic" : "mean"; }

const char* activation_name(Activation a) { return a == Activation::relu ? "relu" : "gelu"; }

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "gelu") return Activation::gelu;
  throw ArgumentError("unknown activation '" + s + "'");
}

/// Per-(epoch, position) generator, independent of batching and threading.
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a),    static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b),    static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

constexpr std::uint64_t kValidationStream = 0x76616c6964ull;  // "valid"
constexpr std::uint64_t kDropStream = 0x64726f70ull;          // "drop"

}  // namespace

void TrainConfig::validate() const {
  model.encoder.validate();
  if (batch_size == 0 || epochs == 0 || validate_every == 0)
    throw ArgumentError("batch size, epochs and validation interval must be positive");
  if (!(lr > 0.0)) throw ArgumentError("learning rate must be positive");
  if (!std::isfinite(alpha)) throw ArgumentError("alpha must be finite");
  if (!(drop_rate >= 0.0 && drop_rate < 1.0)) throw ArgumentError("drop rate must lie in [0, 1)");
  if (threads == 0) throw ArgumentError("threads must be positive");
  if (model.max_pairs == 0) throw ArgumentError("max pairs must be positive");
  // With every module off the score set is empty and pooling has nothing to pool.
  if (!model.use_local && !model.use_global && !model.use_context)
    throw ArgumentError("at least one of the local, global and context modules must be enabled");
}

std::string TrainConfig::to_json() const {
  ordered_json j;
  j["embedding_dim"] = model.encoder.model_dim;
  j["trm_layers"] = model.encoder.num_layers;
  j["trm_heads"] = model.encoder.num_heads;
  j["trm_hidden_dim"] = model.encoder.ffn_dim;
  j["trm_dropout"] = model.encoder.dropout;
  j["activation"] = activation_name(model.encoder.activation);
  j["input_dropout"] = model.encoder.input_dropout;
  j["local"] = model.use_local;
  j["global"] = model.use_global;
  j["context"] = model.use_context;
  j["class"] = model.use_class;
  j["rse"] = rse_mode_name(model.rse);
  j["rse_type_cap"] = model.rse_type_cap;
  j["max_pairs"] = model.max_pairs;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["warmup_epochs"] = warmup;
  j["valid_epochs"] = validate_every;
  j["learning_rate"] = lr;
  j["alpha"] = alpha;
  j["type_sample"] = type_sample;
  j["kg_sample"] = rel_sample;
  j["seed"] = seed;
  j["loss"] = loss_kind_name(loss.kind);
  j["stop_weight_gradient"] = loss.stop_weight_gradient;
  j["drop_rate"] = drop_rate;
  j["drop_mode"] = drop_mode_name(drop_mode);
  j["inverse"] = include_inverse;
  j["class_rule"] = class_rule.to_string();
  j["full_valid"] = full_valid;
  j["clip_norm"] = clip_norm;
  j["tie_policy"] = tie_policy_name(tie_policy);
  j["threads"] = threads;
  j["deterministic"] = deterministic;
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  const auto j = ordered_json::parse(text);
  TrainConfig c;
  c.model.encoder.model_dim = j.at("embedding_dim");
  c.model.encoder.num_layers = j.at("trm_layers");
  c.model.encoder.num_heads = j.at("trm_heads");
  c.model.encoder.ffn_dim = j.at("trm_hidden_dim");
  c.model.encoder.dropout = j.at("trm_dropout");
  c.model.encoder.activation = parse_activation(j.at("activation"));
  c.model.encoder.input_dropout = j.at("input_dropout");
  c.model.use_local = j.at("local");
  c.model.use_global = j.at("global");
  c.model.use_context = j.at("context");
  c.model.use_class = j.at("class");
  c.model.rse = parse_rse_mode(j.at("rse"));
  c.model.rse_type_cap = j.at("rse_type_cap");
  c.model.max_pairs = j.at("max_pairs");
  c.batch_size = j.at("batch_size");
  c.epochs = j.at("epochs");
  c.warmup = j.at("warmup_epochs");
  c.validate_every = j.at("valid_epochs");
  c.lr = j.at("learning_rate");
  c.alpha = j.at("alpha");
  c.type_sample = j.at("type_sample");
  c.rel_sample = j.at("kg_sample");
  c.seed = j.at("seed");
  c.loss.kind = parse_loss_kind(j.at("loss"));
  c.loss.stop_weight_gradient = j.at("stop_weight_gradient");
  c.drop_rate = j.at("drop_rate");
  c.drop_mode = parse_drop_mode(j.at("drop_mode"));
  c.include_inverse = j.at("inverse");
  c.class_rule = ClassRule::parse(j.at("class_rule"));
  c.full_valid = j.at("full_valid");
  c.clip_norm = j.at("clip_norm");
  c.tie_policy = parse_tie_policy(j.at("tie_policy"));
  c.threads = j.at("threads");
  c.deterministic = j.at("deterministic");
  return c;
}

KnowledgeGraph prepare_graph(const KnowledgeGraph& kg, const TrainConfig& cfg) {
  if (cfg.drop_rate == 0.0) return kg;
  auto rng = stream_rng(cfg.seed, kDropStream, 0);
  return drop_neighbors(kg, cfg.drop_rate, cfg.drop_mode, rng);
}

MetricsReport validate(const TetModel<float>& model, const KnowledgeGraph& kg, Split split,
                       const TrainConfig& cfg) {
  if (cfg.full_valid) return evaluate(model, kg, split, cfg.alpha, cfg.tie_policy);
  return evaluate_split(
      kg, split,
      [&](EntityId e) {
        auto rng = stream_rng(cfg.seed, kValidationStream, e);
        return model.score(kg, e, sample_neighbors(kg, e, cfg.type_sample, cfg.rel_sample, rng), cfg.alpha);
      },
      cfg.tie_policy);
}

MetricsReport evaluate(const TetModel<float>& model, const KnowledgeGraph& kg, Split split, double alpha,
                       TiePolicy policy, std::vector<QueryResult>* per_query) {
  return evaluate_split(
      kg, split, [&](EntityId e) { return model.score(kg, e, all_neighbors(kg, e), alpha); }, policy,
      per_query);
}

Checkpoint make_checkpoint(const TetModel<float>& model, const AdamState<float>& opt,
                           const KnowledgeGraph& kg, const TrainConfig& cfg) {
  Checkpoint ck;
  ck.config = cfg;
  ck.shape = model.shape();
  ck.entity_fingerprint = kg.vocab.entities.fingerprint();
  ck.relation_fingerprint = kg.vocab.relations.fingerprint();
  ck.type_fingerprint = kg.vocab.types.fingerprint();
  ck.params = model.params();
  ck.optimizer = opt;
  return ck;
}

TetModel<float> restore_model(const Checkpoint& ck, const KnowledgeGraph& kg) {
  if (!(ck.shape == ModelShape::of(kg)))
    throw ArgumentError("checkpoint model shape does not match the dataset");
  TetModel<float> model(ck.shape, ck.config.model, ck.config.seed);
  auto& store = model.params();
  require(store.size() == ck.params.size(), "checkpoint parameter count does not match the model");
  for (std::size_t i = 0; i < store.size(); ++i) {
    require(store.name(i) == ck.params.name(i) && store.value(i).shape() == ck.params.value(i).shape(),
            "checkpoint parameter '" + ck.params.name(i) + "' does not match the model");
    store.value(i) = ck.params.value(i);
  }
  return model;
}

GradCheckReport check_model_gradients(const KnowledgeGraph& kg, const TrainConfig& config, std::size_t entities,
                                      std::size_t coords) {
  TrainConfig cfg = config;
  cfg.model.encoder.dropout = 0.0;
  cfg.loss.stop_weight_gradient = false;
  TetModel<double> model(ModelShape::of(kg), cfg.model, cfg.seed);
  std::vector<EntityId> checked = kg.entities_with(Split::train);
  checked.resize(std::min(checked.size(), entities));
  require(!checked.empty(), "check_model_gradients: no training entities");

  const LossFn loss = [&](ParamBinder<double>& bind) {
    std::vector<Var<double>> terms;
    for (EntityId e : checked) {
      const Var<double> logits = model.logits(bind, kg, e, all_neighbors(kg, e), ForwardContext{}, cfg.alpha);
      terms.push_back(type_loss(to_probabilities(logits), positive_label_row(kg, e, {Split::train}), cfg.loss));
    }
    return ops::mean(ops::concat_cols(terms));
  };
  GradCheckOptions opts;
  opts.coords_per_param = coords;
  opts.seed = cfg.seed;
  return grad_check(loss, model.params(), opts);
}

namespace {

struct BatchOutcome {
  double loss_sum = 0.0;
  std::vector<std::pair<EntityId, double>> losses;
};

/// Forward + backward for `entities[begin, end)`, accumulating gradients
/// scaled by 1/batch into `grads`.
BatchOutcome run_entities(const TetModel<float>& model, const KnowledgeGraph& kg, const TrainConfig& cfg,
                          std::span<const EntityId> entities, std::size_t first_position, std::size_t epoch,
                          std::size_t batch, GradientBuffer<float>& grads) {
  BatchOutcome out;
  for (std::size_t i = 0; i < entities.size(); ++i) {
    const EntityId e = entities[i];
    auto rng = stream_rng(cfg.seed, epoch, first_position + i);
    const NeighborSample sample = sample_neighbors(kg, e, cfg.type_sample, cfg.rel_sample, rng);
    const auto labels = positive_label_row(kg, e, {Split::train});
    Tape<float> tape(true);
    ParamBinder<float> bind(tape, model.params(), &grads);
    const ForwardContext ctx{true, &rng};
    const Var<float> logits = model.logits(bind, kg, e, sample, ctx, static_cast<float>(cfg.alpha));
    const Var<float> loss = type_loss(to_probabilities(logits), labels, cfg.loss);
    const double value = loss.value()[0];
    out.losses.emplace_back(e, value);
    out.loss_sum += value;
    if (!std::isfinite(value)) return out;
    tape.backward(loss, 1.0f / static_cast<float>(batch));
  }
  return out;
}

[[noreturn]] void numeric_failure(const KnowledgeGraph& kg, std::size_t epoch, std::size_t step,
                                  const std::vector<std::pair<EntityId, double>>& losses) {
  std::ostringstream msg;
  msg << "non-finite loss at epoch " << epoch << ", step " << step << "; batch:";
  for (const auto& [e, l] : losses) msg << ' ' << kg.vocab.entities.label(e) << '=' << l;
  throw NumericError(msg.str());
}

}  // namespace

TrainResult train(const KnowledgeGraph& full_kg, const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  const KnowledgeGraph kg = prepare_graph(full_kg, cfg);
  TetModel<float> model(ModelShape::of(kg), cfg.model, cfg.seed);
  AdamState<float> adam(model.params());
  const std::size_t workers = cfg.deterministic ? 1 : cfg.threads;
  std::vector<GradientBuffer<float>> grads;
  for (std::size_t w = 0; w < workers; ++w) grads.emplace_back(model.params());

  std::vector<EntityId> entities = kg.entities_with(Split::train);
  if (entities.empty()) throw ArgumentError("no training assertions");
  std::mt19937_64 shuffle_rng(cfg.seed);

  TrainResult result;
  bool have_best = false;
  auto emit = [&](const ordered_json& j) {
    if (log) *log << j.dump() << '\n' << std::flush;
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(epoch, cfg.lr, cfg.warmup);
    std::shuffle(entities.begin(), entities.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t step = 0;
    for (std::size_t begin = 0; begin < entities.size(); begin += cfg.batch_size, ++step) {
      const std::size_t end = std::min(entities.size(), begin + cfg.batch_size);
      const std::span<const EntityId> batch(entities.data() + begin, end - begin);
      for (auto& g : grads) g.zero();

      std::vector<BatchOutcome> outcomes(workers);
      if (workers == 1) {
        outcomes[0] = run_entities(model, kg, cfg, batch, begin, epoch, batch.size(), grads[0]);
      } else {
        const std::size_t chunk = (batch.size() + workers - 1) / workers;
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
          const std::size_t lo = std::min(batch.size(), w * chunk);
          const std::size_t hi = std::min(batch.size(), lo + chunk);
          if (lo == hi) continue;
          pool.emplace_back([&, w, lo, hi] {
            outcomes[w] = run_entities(model, kg, cfg, batch.subspan(lo, hi - lo), begin + lo, epoch,
                                       batch.size(), grads[w]);
          });
        }
        for (auto& t : pool) t.join();
        for (std::size_t w = 1; w < workers; ++w) grads[0].accumulate(grads[w]);
      }

      std::vector<std::pair<EntityId, double>> losses;
      for (const auto& o : outcomes) {
        epoch_loss += o.loss_sum;
        losses.insert(losses.end(), o.losses.begin(), o.losses.end());
      }
      for (const auto& [e, l] : losses)
        if (!std::isfinite(l)) numeric_failure(kg, epoch, step, losses);
      if (cfg.clip_norm > 0.0) clip_grad_norm(grads[0], cfg.clip_norm);
      adam_step(model.params(), grads[0], adam, lr);
    }

    EpochRecord rec{epoch, lr, epoch_loss / static_cast<double>(entities.size())};
    result.epochs.push_back(rec);
    emit({{"event", "epoch"}, {"epoch", epoch}, {"lr", lr}, {"loss", rec.mean_loss}});

    const bool last = epoch + 1 == cfg.epochs;
    if ((epoch + 1) % cfg.validate_every == 0 || last) {
      const MetricsReport m = validate(model, kg, Split::valid, cfg);
      result.validations.push_back({epoch, m});
      emit({{"event", "validation"},
            {"epoch", epoch},
            {"split", "valid"},
            {"queries", m.queries},
            {"mrr", m.mrr},
            {"hit@1", m.hit1},
            {"hit@3", m.hit3},
            {"hit@10", m.hit10}});
      if (!have_best || m.mrr > result.best.best_mrr) {
        have_best = true;
        result.best = make_checkpoint(model, adam, full_kg, cfg);
        result.best.best_mrr = m.mrr;
        result.best.best_epoch = static_cast<long>(epoch);
      }
    }
  }
  return result;
}

}  // namespace tet
