#pragma once

#include <cstdint>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tet/evaluation.hpp"
#include "tet/grad_check.hpp"
#include "tet/kg_data.hpp"
#include "tet/model.hpp"
#include "tet/optim.hpp"
#include "tet/pooling_loss.hpp"

namespace tet {

/// A loss or gradient went non-finite during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Defaults follow the published hyperparameter table (FB15kET column).
struct TrainConfig {
  ModelConfig model;
  std::size_t batch_size = 128;
  std::size_t epochs = 500;
  std::size_t warmup = 50;
  std::size_t validate_every = 25;
  double lr = 0.001;
  double alpha = 0.5;
  std::size_t type_sample = 3;
  std::size_t rel_sample = 7;
  std::uint64_t seed = 0;
  LossConfig loss;
  double drop_rate = 0.0;
  DropMode drop_mode = DropMode::relational_neighbors;
  bool include_inverse = true;
  ClassRule class_rule;
  /// Validate over all neighbors instead of a seeded train-size sample.
  bool full_valid = false;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
  TiePolicy tie_policy = TiePolicy::optimistic;
  std::size_t threads = 1;
  /// Forces serial numeric reduction regardless of `threads`. A single
  /// thread is always serial.
  bool deterministic = false;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

/// Applies the configured neighbor/relation dropping (seeded by cfg.seed).
KnowledgeGraph prepare_graph(const KnowledgeGraph& kg, const TrainConfig& cfg);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
};

struct ValidationRecord {
  std::size_t epoch = 0;
  MetricsReport metrics;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  TrainConfig config;
  ModelShape shape;
  std::uint64_t entity_fingerprint = 0;
  std::uint64_t relation_fingerprint = 0;
  std::uint64_t type_fingerprint = 0;
  ParameterStore<float> params;
  AdamState<float> optimizer;
  double best_mrr = std::numeric_limits<double>::quiet_NaN();
  long best_epoch = -1;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochRecord> epochs;
  std::vector<ValidationRecord> validations;
};

/// Full optimisation loop. One training example is one entity with its full
/// train label row; neighbors are resampled for every step. Every
/// `validate_every` epochs (and after the last epoch) the valid split is
/// scored and the best-MRR parameters are retained. `log`, when given,
/// receives one NDJSON record per epoch and per validation.
TrainResult train(const KnowledgeGraph& kg, const TrainConfig& cfg, std::ostream* log = nullptr);

/// Validation-time metrics: neighbors sampled at train sizes with a fixed
/// seed, or all neighbors when cfg.full_valid.
MetricsReport validate(const TetModel<float>& model, const KnowledgeGraph& kg, Split split,
                       const TrainConfig& cfg);

/// Test-time metrics over all neighbors, one entity at a time.
MetricsReport evaluate(const TetModel<float>& model, const KnowledgeGraph& kg, Split split, double alpha,
                       TiePolicy policy = TiePolicy::optimistic,
                       std::vector<QueryResult>* per_query = nullptr);

Checkpoint make_checkpoint(const TetModel<float>& model, const AdamState<float>& opt,
                           const KnowledgeGraph& kg, const TrainConfig& cfg);

/// Finite-difference check of the full 64-bit model on the mean type loss of
/// the first `entities` training entities with all neighbors. Dropout is
/// off and the negative weight is differentiated, since finite differences
/// see it move. `coords` coordinates are sampled per parameter (0 = all).
GradCheckReport check_model_gradients(const KnowledgeGraph& kg, const TrainConfig& cfg, std::size_t entities,
                                      std::size_t coords);

/// Rebuilds a model from a checkpoint after checking it against `kg`.
TetModel<float> restore_model(const Checkpoint& ck, const KnowledgeGraph& kg);

}  // namespace tet
