#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "tet/ops.hpp"
#include "tet/parameters.hpp"

namespace tet {

struct GradCheckOptions {
  double step = 1e-4;
  /// Fourth-order central stencil (f(±h), f(±2h)); the second-order stencil
  /// (f(±h) only) needs a much smaller step and loses digits to roundoff.
  bool fourth_order = true;
  /// Coordinates sampled per parameter tensor; 0 checks every coordinate.
  std::size_t coords_per_param = 0;
  std::uint64_t seed = 0;
  /// A coordinate whose one-sided differences disagree by more than this
  /// (relative to max(1, |d+|, |d-|)) sits on a kink and is skipped.
  double kink_tolerance = 1e-2;
  /// Relative disagreement between the second- and fourth-order estimates
  /// above which a coordinate is treated as a kink.
  double stencil_tolerance = 1e-4;
  /// Coordinates where both gradients are below this magnitude carry no
  /// resolvable signal under central differences and are skipped. The
  /// default sits well above the ~1e-11 roundoff of the default stencil.
  double min_magnitude = 1e-8;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  std::size_t skipped_small = 0;
  bool finite = true;

  bool passed(double tolerance) const { return finite && max_rel_error < tolerance; }
};

using LossFn = std::function<Var<double>(ParamBinder<double>&)>;

/// Compares reverse-mode gradients against central finite differences.
/// The fourth-order estimate is (8(f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h.
/// The relative error of a coordinate is
///   |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
/// Parameters are perturbed in place and restored afterwards.
inline GradCheckReport grad_check(const LossFn& loss_fn, ParameterStore<double>& params,
                                  const GradCheckOptions& opts = {}) {
  GradCheckReport report;
  std::uint64_t trace = 0;
  auto eval = [&]() {
    Tape<double> tape(false);
    ParamBinder<double> bind(tape, params, nullptr);
    trace = 0xcbf29ce484222325ull;
    struct Guard {
      explicit Guard(std::uint64_t* t) { ops::branch_trace = t; }
      ~Guard() { ops::branch_trace = nullptr; }
    } guard(&trace);
    Var<double> loss = loss_fn(bind);
    require(loss.value().size() == 1, "grad_check: loss must be scalar");
    return loss.value()[0];
  };

  GradientBuffer<double> grads(params);
  {
    Tape<double> tape(true);
    ParamBinder<double> bind(tape, params, &grads);
    Var<double> loss = loss_fn(bind);
    if (!std::isfinite(loss.value()[0])) {
      report.finite = false;
      return report;
    }
    tape.backward(loss);
  }
  const double f0 = eval();
  const std::uint64_t trace0 = trace;

  std::mt19937_64 rng(opts.seed);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params.value(p).data();
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.coords_per_param > 0 && coords.size() > opts.coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t k : coords) {
      const double orig = values[k];
      bool crossed = false;
      auto at = [&](double offset) {
        values[k] = orig + offset;
        const double f = eval();
        values[k] = orig;
        crossed = crossed || trace != trace0;
        return f;
      };
      const double h = opts.step;
      const double fp = at(h), fm = at(-h);
      const double fp2 = opts.fourth_order ? at(2 * h) : 0.0;
      const double fm2 = opts.fourth_order ? at(-2 * h) : 0.0;
      if (!std::isfinite(fp) || !std::isfinite(fm) || !std::isfinite(fp2) || !std::isfinite(fm2)) {
        report.finite = false;
        return report;
      }
      if (crossed) {
        ++report.skipped_kinks;
        continue;
      }
      const double d_plus = (fp - f0) / h;
      const double d_minus = (f0 - fm) / h;
      if (std::abs(d_plus - d_minus) >
          opts.kink_tolerance * std::max({1.0, std::abs(d_plus), std::abs(d_minus)})) {
        ++report.skipped_kinks;
        continue;
      }
      const double central = (fp - fm) / (2.0 * h);
      const double numeric = opts.fourth_order ? (8.0 * (fp - fm) - (fp2 - fm2)) / (12.0 * h) : central;
      // Smooth functions give stencils that agree to O(h^2); a kink inside
      // [x-2h, x+2h] does not.
      if (opts.fourth_order &&
          std::abs(numeric - central) >
              opts.stencil_tolerance * std::max({std::abs(numeric), std::abs(central), 1e-8})) {
        ++report.skipped_kinks;
        continue;
      }
      const double analytic = grads[p][k];
      if (std::max(std::abs(analytic), std::abs(numeric)) < opts.min_magnitude) {
        ++report.skipped_small;
        continue;
      }
      const double rel =
          std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-12});
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = params.name(p);
        report.worst_index = k;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace tet
