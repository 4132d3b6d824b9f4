#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tet/kg_data.hpp"
#include "tet/ops.hpp"

namespace tet {

/// Per-type softmax weights over sources: w_i[k] = exp(α·S_i[k]) / Σ_j exp(α·S_j[k]).
/// `scores` is (sources × L).
template <typename T>
Var<T> exp_pool_weights(Var<T> scores, T alpha) {
  require(scores.rows() > 0, "exp_weighted_pool: no score sources");
  return ops::softmax(ops::scale(scores, alpha), 0);
}

/// S_e[k] = Σ_i w_i[k]·S_i[k], a 1×L row.
template <typename T>
Var<T> exp_weighted_pool(Var<T> scores, T alpha) {
  if (scores.rows() == 1) return scores;
  return ops::sum_rows(ops::mul(exp_pool_weights(scores, alpha), scores));
}

template <typename T>
Var<T> to_probabilities(Var<T> pooled) {
  return ops::sigmoid(pooled);
}

/// Value-only pooling of plain score vectors (one per source). The result is
/// bit-identical under any permutation of `sources`.
std::vector<double> pool_scores(const std::vector<std::vector<double>>& sources, double alpha);

/// Steeper false-negative-aware weight: 3x − 2x² on [0, 0.5], x − 2x² + 1 on
/// (0.5, 1]. Zero at both ends, 1 at x = 0.5, symmetric about 0.5.
double sfna_weight(double x);
double sfna_weight_derivative(double x);

/// Smooth bump 4x(1 − x) used as the FNA negative weight.
double fna_weight(double x);
double fna_weight_derivative(double x);

enum class LossKind { bce, fna, sfna };

LossKind parse_loss_kind(const std::string& s);
const char* loss_kind_name(LossKind k);

struct NegativeWeight {
  std::function<double(double)> value;
  std::function<double(double)> derivative;
};

struct LossConfig {
  LossKind kind = LossKind::sfna;
  NegativeWeight fna{fna_weight, fna_weight_derivative};
  /// Treat the negative weight as a constant during differentiation.
  bool stop_weight_gradient = true;
  double clamp = 1e-7;

  double negative_weight(double p) const;
  double negative_weight_derivative(double p) const;
};

/// Per-entity loss: −Σ_{y=1} log p_k − Σ_{y=0} w(p_k)·log(1 − p_k), with p
/// clamped to [ε, 1 − ε].
double loss_value(std::span<const double> probs, std::span<const std::uint8_t> labels, const LossConfig& cfg);

/// Differentiable form of loss_value over a 1×L probability row.
template <typename T>
Var<T> type_loss(Var<T> probs, std::span<const std::uint8_t> labels, const LossConfig& cfg) {
  const std::size_t L = probs.cols();
  require(probs.rows() == 1, "type_loss: probabilities must be a single row");
  require(labels.size() == L, [&] {
    return "type_loss: label length " + std::to_string(labels.size()) + " != number of types " +
           std::to_string(L);
  });
  const auto& pv = probs.value();
  std::vector<double> p(L);
  for (std::size_t k = 0; k < L; ++k) p[k] = static_cast<double>(pv[k]);
  const double total = loss_value(p, labels, cfg);

  std::vector<T> dp(L);
  const double lo = cfg.clamp, hi = 1.0 - cfg.clamp;
  for (std::size_t k = 0; k < L; ++k) {
    const bool clamped = p[k] < lo || p[k] > hi;
    ops::trace_branch(clamped ? 2 : (p[k] <= 0.5));
    if (clamped) continue;  // flat
    if (labels[k]) {
      dp[k] = static_cast<T>(-1.0 / p[k]);
    } else {
      double g = cfg.negative_weight(p[k]) / (1.0 - p[k]);
      if (!cfg.stop_weight_gradient) g -= cfg.negative_weight_derivative(p[k]) * std::log(1.0 - p[k]);
      dp[k] = static_cast<T>(g);
    }
  }
  const auto ip = probs.id();
  return probs.tape().record(Tensor<T>::matrix(1, 1, static_cast<T>(total)), {probs},
                             [ip, dp = std::move(dp)](Tape<T>& t, std::uint32_t self) {
                               const T g = t.grad(self)[0];
                               auto& d = t.grad(ip);
                               for (std::size_t k = 0; k < dp.size(); ++k) d[k] += g * dp[k];
                             });
}

}  // namespace tet
