#include "tet/pooling_loss.hpp"

#include <algorithm>

namespace tet {

std::vector<double> pool_scores(const std::vector<std::vector<double>>& sources, double alpha) {
  require(!sources.empty(), "exp_weighted_pool: no score sources");
  const std::size_t L = sources.front().size();
  // Canonical row order makes the floating-point sums, and so the result,
  // exactly independent of source order.
  std::vector<const std::vector<double>*> rows;
  for (const auto& s : sources) {
    require(s.size() == L, "exp_weighted_pool: sources differ in length");
    rows.push_back(&s);
  }
  std::sort(rows.begin(), rows.end(), [](const auto* a, const auto* b) { return *a < *b; });
  Tensor<double> m = Tensor<double>::matrix(sources.size(), L);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i]->begin(), rows[i]->end(), m.row_span(i).begin());
  Tape<double> tape(false);
  const auto pooled = exp_weighted_pool(tape.constant(std::move(m)), alpha);
  return pooled.value().values();
}

namespace {

void check_probability(double x) {
  if (!(x >= 0.0 && x <= 1.0))
    throw ArgumentError("weight argument must lie in [0, 1], got " + std::to_string(x));
}

}  // namespace

double sfna_weight(double x) {
  check_probability(x);
  return x <= 0.5 ? 3.0 * x - 2.0 * x * x : x - 2.0 * x * x + 1.0;
}

double sfna_weight_derivative(double x) {
  check_probability(x);
  return x <= 0.5 ? 3.0 - 4.0 * x : 1.0 - 4.0 * x;
}

double fna_weight(double x) {
  check_probability(x);
  return 4.0 * x * (1.0 - x);
}

double fna_weight_derivative(double x) {
  check_probability(x);
  return 4.0 - 8.0 * x;
}

LossKind parse_loss_kind(const std::string& s) {
  if (s == "bce") return LossKind::bce;
  if (s == "fna") return LossKind::fna;
  if (s == "sfna") return LossKind::sfna;
  throw ArgumentError("unknown loss '" + s + "' (expected bce, fna or sfna)");
}

const char* loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::bce:
      return "bce";
    case LossKind::fna:
      return "fna";
    case LossKind::sfna:
      return "sfna";
  }
  return "?";
}

double LossConfig::negative_weight(double p) const {
  switch (kind) {
    case LossKind::bce:
      return 1.0;
    case LossKind::fna:
      return fna.value(p);
    case LossKind::sfna:
      return sfna_weight(p);
  }
  return 1.0;
}

double LossConfig::negative_weight_derivative(double p) const {
  switch (kind) {
    case LossKind::bce:
      return 0.0;
    case LossKind::fna:
      return fna.derivative(p);
    case LossKind::sfna:
      return sfna_weight_derivative(p);
  }
  return 0.0;
}

double loss_value(std::span<const double> probs, std::span<const std::uint8_t> labels,
                  const LossConfig& cfg) {
  require(probs.size() == labels.size(), "loss: label length " + std::to_string(labels.size()) +
                                             " != number of types " + std::to_string(probs.size()));
  double total = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const double p = std::clamp(probs[k], cfg.clamp, 1.0 - cfg.clamp);
    if (labels[k])
      total -= std::log(p);
    else
      total -= cfg.negative_weight(p) * std::log(1.0 - p);
  }
  return total;
}

}  // namespace tet
