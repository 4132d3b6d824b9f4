#include "tet/cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tet/checkpoint.hpp"
#include "tet/grad_check.hpp"
#include "tet/toy.hpp"
#include "tet/training.hpp"

namespace tet::cli {

using nlohmann::ordered_json;

namespace {

/// Config files use the flat snake_case keys of the hyperparameter table;
/// the matching flags are kebab-case.
class SnakeCaseToml : public CLI::ConfigTOML {
 public:
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    auto items = CLI::ConfigTOML::from_config(input);
    for (auto& item : items) std::replace(item.name.begin(), item.name.end(), '_', '-');
    return items;
  }
};

/// Thrown for semantically invalid option values after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Settings {
  TrainConfig cfg;
  std::string data;
  std::string out;
  std::string loss = "sfna";
  std::string rse = "off";
  std::string tie = "optimistic";
  std::string class_rule = "first-path-segment";
  std::string drop_mode = "relational-neighbors";
  std::string activation = "relu";
  bool no_local = false, no_global = false, no_context = false, no_class = false;
  bool no_inverse = false, no_input_dropout = false, weight_gradient = false;

  // eval
  std::string checkpoint;
  std::string split = "test";
  bool per_query = false;

  // gradcheck
  double tolerance = 1e-5;
  std::size_t coords = 16;
  std::size_t check_entities = 3;
  ToyOptions toy;
};

void add_shared_options(CLI::App& app, Settings& s) {
  auto& c = s.cfg;
  auto& m = c.model;
  auto& e = m.encoder;
  app.add_option("--data", s.data, "Dataset directory")->envname("TET_DATA_DIR");
  app.add_option("--out", s.out, "Output directory for reports, logs and checkpoints");
  app.add_option("--seed", c.seed, "Random seed")->capture_default_str();

  app.add_option("--embedding-dim,--dim", e.model_dim, "Embedding and transformer width")
      ->capture_default_str();
  app.add_option("--trm-layers", e.num_layers, "Transformer layers per module")->capture_default_str();
  app.add_option("--trm-heads", e.num_heads, "Attention heads")->capture_default_str();
  app.add_option("--trm-hidden-dim", e.ffn_dim, "Feed-forward hidden width")->capture_default_str();
  app.add_option("--trm-dropout", e.dropout, "Transformer dropout rate")->capture_default_str();
  app.add_option("--activation", s.activation, "Feed-forward activation")
      ->check(CLI::IsMember({"relu", "gelu"}))
      ->capture_default_str();
  app.add_flag("--no-input-dropout", s.no_input_dropout, "Skip dropout on input embeddings");

  app.add_flag("--no-local", s.no_local, "Disable the local transformer");
  app.add_flag("--no-global", s.no_global, "Disable the global transformer");
  app.add_flag("--no-context", s.no_context, "Disable the context transformer");
  app.add_flag("--no-class", s.no_class, "Keep has_type instead of class relations");
  app.add_option("--rse", s.rse, "Relation semantic enhancement")
      ->check(CLI::IsMember({"off", "avg", "max", "min"}))
      ->capture_default_str();
  app.add_option("--rse-type-cap", m.rse_type_cap, "Typed neighbors per enhanced relation")
      ->capture_default_str();
  app.add_option("--max-pairs", m.max_pairs, "Neighbor pairs kept in global and context sequences")
      ->capture_default_str();

  app.add_option("--batch-size", c.batch_size, "Entities per batch")->capture_default_str();
  app.add_option("--epochs", c.epochs, "Training epochs")->capture_default_str();
  app.add_option("--warmup-epochs", c.warmup, "Epochs at the initial learning rate")->capture_default_str();
  app.add_option("--valid-epochs", c.validate_every, "Epochs between validations")->capture_default_str();
  app.add_option("--learning-rate,--lr", c.lr, "Initial learning rate")->capture_default_str();
  app.add_option("--alpha", c.alpha, "Pooling temperature")->capture_default_str();
  app.add_option("--type-sample", c.type_sample, "Type neighbors sampled per step")->capture_default_str();
  app.add_option("--kg-sample", c.rel_sample, "Relational neighbors sampled per step")->capture_default_str();
  app.add_option("--loss", s.loss, "Loss function")
      ->check(CLI::IsMember({"bce", "fna", "sfna"}))
      ->capture_default_str();
  app.add_flag("--weight-gradient", s.weight_gradient, "Differentiate through the negative weight");
  app.add_option("--drop-rate", c.drop_rate, "Fraction of relational structure to drop")
      ->capture_default_str();
  app.add_option("--drop-mode", s.drop_mode, "What --drop-rate removes")
      ->check(CLI::IsMember({"relational-neighbors", "relation-types"}))
      ->capture_default_str();
  app.add_flag("--no-inverse", s.no_inverse, "Do not add inverse relational neighbors");
  app.add_option("--class-rule", s.class_rule, "first-path-segment, whole-label or prefix-depth:K")
      ->capture_default_str();
  app.add_flag("--full-valid", c.full_valid, "Validate over all neighbors");
  app.add_option("--clip-norm", c.clip_norm, "Gradient norm clip (0 disables)")->capture_default_str();
  app.add_option("--tie-policy", s.tie, "Ranking tie policy")
      ->check(CLI::IsMember({"optimistic", "mean"}))
      ->capture_default_str();
  app.add_option("--threads", c.threads, "Worker threads")->capture_default_str();
  app.add_flag("--deterministic", c.deterministic, "Serial numeric reduction");
}

/// Folds the string-valued options into s.cfg and validates it.
void resolve(Settings& s) {
  auto& m = s.cfg.model;
  try {
    m.encoder.activation = s.activation == "gelu" ? Activation::gelu : Activation::relu;
    m.encoder.input_dropout = !s.no_input_dropout;
    m.use_local = !s.no_local;
    m.use_global = !s.no_global;
    m.use_context = !s.no_context;
    m.use_class = !s.no_class;
    m.rse = parse_rse_mode(s.rse);
    s.cfg.loss.kind = parse_loss_kind(s.loss);
    s.cfg.loss.stop_weight_gradient = !s.weight_gradient;
    s.cfg.drop_mode =
        s.drop_mode == "relation-types" ? DropMode::relation_types : DropMode::relational_neighbors;
    s.cfg.include_inverse = !s.no_inverse;
    s.cfg.class_rule = ClassRule::parse(s.class_rule);
    s.cfg.tie_policy = parse_tie_policy(s.tie);
    s.cfg.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

std::string toml_value(const ordered_json& v) {
  if (v.is_number_float()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
    std::string s = buf;
    if (s.find_first_of(".en") == std::string::npos) s += ".0";
    return s;
  }
  return v.dump();
}

/// Flat TOML that `--config` reads back to the same run.
std::string resolved_toml(const Settings& s) {
  const auto& c = s.cfg;
  const auto& e = c.model.encoder;
  ordered_json j;
  j["data"] = std::filesystem::absolute(s.data).string();
  j["seed"] = c.seed;
  j["embedding_dim"] = e.model_dim;
  j["trm_layers"] = e.num_layers;
  j["trm_heads"] = e.num_heads;
  j["trm_hidden_dim"] = e.ffn_dim;
  j["trm_dropout"] = e.dropout;
  j["activation"] = s.activation;
  j["no_input_dropout"] = s.no_input_dropout;
  j["no_local"] = s.no_local;
  j["no_global"] = s.no_global;
  j["no_context"] = s.no_context;
  j["no_class"] = s.no_class;
  j["rse"] = s.rse;
  j["rse_type_cap"] = c.model.rse_type_cap;
  j["max_pairs"] = c.model.max_pairs;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["warmup_epochs"] = c.warmup;
  j["valid_epochs"] = c.validate_every;
  j["learning_rate"] = c.lr;
  j["alpha"] = c.alpha;
  j["type_sample"] = c.type_sample;
  j["kg_sample"] = c.rel_sample;
  j["loss"] = s.loss;
  j["weight_gradient"] = s.weight_gradient;
  j["drop_rate"] = c.drop_rate;
  j["drop_mode"] = s.drop_mode;
  j["no_inverse"] = s.no_inverse;
  j["class_rule"] = s.class_rule;
  j["full_valid"] = c.full_valid;
  j["clip_norm"] = c.clip_norm;
  j["tie_policy"] = s.tie;
  j["threads"] = c.threads;
  j["deterministic"] = c.deterministic;
  std::ostringstream out;
  for (const auto& [k, v] : j.items()) out << k << " = " << toml_value(v) << '\n';
  return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write " + path.string());
  out << text;
}

std::filesystem::path output_dir(const Settings& s, bool required) {
  if (s.out.empty()) {
    if (required) throw UsageError("--out is required");
    return {};
  }
  std::filesystem::create_directories(s.out);
  return s.out;
}

KnowledgeGraph load(const Settings& s, const TrainConfig& cfg) {
  if (s.data.empty()) throw UsageError("--data (or TET_DATA_DIR) is required");
  LoadOptions opts;
  opts.include_inverse = cfg.include_inverse;
  opts.class_rule = cfg.class_rule;
  return load_dataset(s.data, opts);
}

ordered_json stats_json(const DatasetStats& st) {
  return {{"entities", st.entities},
          {"relations", st.relations},
          {"types", st.types},
          {"clusters", st.clusters},
          {"train_triples", st.train_triples},
          {"train_tuples", st.train_tuples},
          {"valid", st.valid},
          {"test", st.test}};
}

ordered_json metrics_json(const MetricsReport& m) { return ordered_json::parse(m.to_json()); }

int cmd_stats(const Settings& s, std::ostream& out) {
  const KnowledgeGraph kg = load(s, s.cfg);
  const std::string text = stats_json(kg.stats()).dump(2);
  if (const auto dir = output_dir(s, false); !dir.empty()) write_text(dir / "stats.json", text + "\n");
  out << text << '\n';
  return ok;
}

int cmd_train(const Settings& s, std::ostream& out) {
  const auto dir = output_dir(s, true);
  const KnowledgeGraph kg = load(s, s.cfg);
  write_text(dir / "config.toml", resolved_toml(s));
  std::ofstream log(dir / "train.ndjson");
  if (!log) throw LoadError("cannot write " + (dir / "train.ndjson").string());
  const TrainResult result = train(kg, s.cfg, &log);
  save_checkpoint(result.best, dir / "checkpoint.tetc");

  // Metrics see the same (possibly neighbor-dropped) graph training saw.
  const KnowledgeGraph scored = prepare_graph(kg, s.cfg);
  const TetModel<float> model = restore_model(result.best, scored);
  ordered_json report;
  report["best_epoch"] = result.best.best_epoch;
  report["best_valid_mrr"] = result.best.best_mrr;
  report["final_loss"] = result.epochs.back().mean_loss;
  report["valid"] = metrics_json(evaluate(model, scored, Split::valid, s.cfg.alpha, s.cfg.tie_policy));
  report["test"] = metrics_json(evaluate(model, scored, Split::test, s.cfg.alpha, s.cfg.tie_policy));
  write_text(dir / "metrics.json", report.dump(2) + "\n");
  out << "trained " << result.epochs.size() << " epochs; best valid MRR " << result.best.best_mrr
      << " at epoch " << result.best.best_epoch << "; test MRR " << report["test"]["mrr"].get<double>()
      << "\noutputs in " << dir.string() << '\n';
  return ok;
}

int cmd_eval(const Settings& s, const CLI::App& app, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(s.checkpoint);
  const KnowledgeGraph full = load(s, ck.config);
  check_vocab(ck, full);
  const KnowledgeGraph kg = prepare_graph(full, ck.config);
  const TetModel<float> model = restore_model(ck, kg);
  const double alpha = app.get_option("--alpha")->count() > 0 ? s.cfg.alpha : ck.config.alpha;
  const TiePolicy tie = app.get_option("--tie-policy")->count() > 0 ? s.cfg.tie_policy : ck.config.tie_policy;
  std::vector<QueryResult> queries;
  const MetricsReport m =
      evaluate(model, kg, parse_split(s.split), alpha, tie, s.per_query ? &queries : nullptr);
  ordered_json report = metrics_json(m);
  report = {{"split", s.split}, {"metrics", report}};
  const std::string text = report.dump(2);
  if (const auto dir = output_dir(s, s.per_query); !dir.empty()) {
    write_text(dir / ("eval_" + s.split + ".json"), text + "\n");
    if (s.per_query) write_query_csv(dir / ("queries_" + s.split + ".csv"), kg, queries);
  }
  out << text << '\n';
  return ok;
}

int cmd_gradcheck(const Settings& s, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  LoadOptions opts;
  opts.include_inverse = s.cfg.include_inverse;
  opts.class_rule = s.cfg.class_rule;
  const KnowledgeGraph kg = build_graph(make_toy_dataset(), opts);
  const GradCheckReport r = check_model_gradients(kg, s.cfg, s.check_entities, s.coords);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool passed = r.passed(s.tolerance);

  ordered_json report;
  report["passed"] = passed;
  report["max_rel_error"] = r.max_rel_error;
  report["tolerance"] = s.tolerance;
  report["finite"] = r.finite;
  report["checked"] = r.checked;
  report["skipped_kinks"] = r.skipped_kinks;
  report["skipped_small"] = r.skipped_small;
  report["worst"] = {{"param", r.worst_param},
                     {"index", r.worst_index},
                     {"analytic", r.worst_analytic},
                     {"numeric", r.worst_numeric}};
  report["seconds"] = seconds;
  const std::string text = report.dump(2);
  if (const auto dir = output_dir(s, false); !dir.empty()) write_text(dir / "gradcheck.json", text + "\n");
  out << text << '\n';
  return passed ? ok : numeric_failure;
}

int cmd_toy(const Settings& s, std::ostream& out) {
  const auto dir = output_dir(s, true);
  const RawDataset raw = make_toy_dataset(s.toy);
  write_dataset(raw, dir);
  out << stats_json(build_graph(raw).stats()).dump(2) << '\n';
  return ok;
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  Settings s;
  CLI::App app{"Knowledge graph entity typing with neighborhood transformers"};
  app.name(argv.empty() ? "tet" : std::filesystem::path(argv.front()).filename().string());
  app.config_formatter(std::make_shared<SnakeCaseToml>());
  app.set_config("--config", "", "TOML file with snake_case keys (flags override it)");
  app.require_subcommand(1, 1);
  app.fallthrough();
  add_shared_options(app, s);

  auto* stats = app.add_subcommand("stats", "Print dataset statistics as JSON");
  auto* train_cmd = app.add_subcommand("train", "Train, keep the best-validation checkpoint, report metrics");
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint with all neighbors");
  eval_cmd->add_option("--checkpoint", s.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--split", s.split, "Split to rank")
      ->check(CLI::IsMember({"train", "valid", "test"}))
      ->capture_default_str();
  eval_cmd->add_flag("--per-query", s.per_query, "Also write entity,type,rank CSV (needs --out)");
  auto* gradcheck =
      app.add_subcommand("gradcheck", "Finite-difference check of the full model on a toy graph");
  gradcheck->add_option("--tolerance", s.tolerance, "Maximum relative error")->capture_default_str();
  gradcheck->add_option("--coords", s.coords, "Coordinates sampled per parameter (0 = all)")
      ->capture_default_str();
  gradcheck->add_option("--entities", s.check_entities, "Entities in the checked loss")
      ->capture_default_str();

  auto* toy = app.add_subcommand("toy", "Write the synthetic structure-typed graph to --out");
  toy->add_option("--entities", s.toy.entities, "Entities")->capture_default_str();
  toy->add_option("--relations", s.toy.relations, "Relations")->capture_default_str();
  toy->add_option("--held-out", s.toy.held_out, "Assertions moved to each of valid and test")
      ->capture_default_str();

  std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? ok : usage_error;
  }

  try {
    resolve(s);
    if (stats->parsed()) return cmd_stats(s, out);
    if (train_cmd->parsed()) return cmd_train(s, out);
    if (eval_cmd->parsed()) return cmd_eval(s, app, out);
    if (toy->parsed()) {
      // Without --seed the library's default graph is written.
      if (app.get_option("--seed")->count() > 0) s.toy.seed = s.cfg.seed;
      return cmd_toy(s, out);
    }
    return cmd_gradcheck(s, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\nRun with --help for usage.\n";
    return usage_error;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return numeric_failure;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return data_error;
  } catch (const LoadError& e) {
    err << "data error: " << e.what() << '\n';
    return data_error;
  } catch (const ArgumentError& e) {
    err << "data error: " << e.what() << '\n';
    return data_error;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return data_error;
  }
}

}  // namespace tet::cli
