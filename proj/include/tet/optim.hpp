#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "tet/parameters.hpp"

namespace tet {

/// Bias-corrected Adam moments for every parameter of a store.
template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;

  AdamState() = default;
  explicit AdamState(const ParameterStore<T>& store) {
    for (const auto& e : store) {
      m.emplace_back(e.value.shape());
      v.emplace_back(e.value.shape());
    }
  }
};

/// One in-place Adam update. The step counter increments on every call, even
/// when all gradients are zero (in which case values stay unchanged).
template <typename T>
void adam_step(ParameterStore<T>& params, const GradientBuffer<T>& grads, AdamState<T>& state, double lr) {
  require(grads.size() == params.size() && state.m.size() == params.size(),
          "adam_step: gradient/state count does not match parameter count");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params.value(i).data();
    auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    require(g.size() == p.size() && m.size() == p.size(),
            [&] { return "adam_step: shape mismatch for parameter '" + params.name(i) + "'"; });
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = static_cast<double>(g[k]);
      const double mk = state.beta1 * static_cast<double>(m[k]) + (1.0 - state.beta1) * gk;
      const double vk = state.beta2 * static_cast<double>(v[k]) + (1.0 - state.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      if (mk == 0.0) continue;
      const double update = lr * (mk / c1) / (std::sqrt(vk / c2) + state.eps);
      p[k] = static_cast<T>(static_cast<double>(p[k]) - update);
    }
  }
}

/// Warmup-then-step-decay schedule: the base rate holds for `warmup` epochs,
/// then the rate is divided by 5 at each decay point. The gap between decay
/// points starts at `warmup` and doubles after every decay, so warmup=50 gives
/// decays at 50, 150, 350, 750, ...
inline double lr_at_epoch(std::uint64_t epoch, double base, std::uint64_t warmup) {
  if (warmup == 0) return base;
  // Divide once by 5^k rather than k times by 5; repeated division drifts
  // by an ulp after the third decay.
  double divisor = 1.0;
  std::uint64_t next = warmup;
  std::uint64_t interval = warmup;
  while (epoch >= next) {
    divisor *= 5.0;
    interval *= 2;
    next += interval;
  }
  return base / divisor;
}

/// Scales all gradients so their global L2 norm is at most `max_norm`.
template <typename T>
double clip_grad_norm(GradientBuffer<T>& grads, double max_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i)
    for (T g : grads[i].data()) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const T s = static_cast<T>(max_norm / norm);
    for (std::size_t i = 0; i < grads.size(); ++i)
      for (T& g : grads[i].data()) g *= s;
  }
  return norm;
}

}  // namespace tet
