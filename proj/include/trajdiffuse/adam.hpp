#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "trajdiffuse/core.hpp"

namespace trajdiffuse {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class S>
struct AdamState {
  std::vector<S> m;
  std::vector<S> v;
  std::uint64_t step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, S(0)), v(n, S(0)) {}
};

enum class AdamOutcome { applied, skipped_non_finite };

/// Bias-corrected Adam step. Elementwise, so tensors packed into one buffer
/// never interact. A gradient containing NaN or Inf leaves params and state
/// untouched.
template <class S>
AdamOutcome adam_update(std::span<S> params, std::span<const S> grads, AdamState<S>& state, const AdamConfig& cfg) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("adam_update: parameter, gradient and state sizes differ");
  if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) throw Error("adam_update: learning rate must be finite and >= 0");
  for (S g : grads)
    if (!std::isfinite(static_cast<double>(g))) return AdamOutcome::skipped_non_finite;

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t j = 0; j < params.size(); ++j) {
    const double g = static_cast<double>(grads[j]);
    const double m = cfg.beta1 * static_cast<double>(state.m[j]) + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * static_cast<double>(state.v[j]) + (1.0 - cfg.beta2) * g * g;
    state.m[j] = static_cast<S>(m);
    state.v[j] = static_cast<S>(v);
    const double update = cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps);
    params[j] = static_cast<S>(static_cast<double>(params[j]) - update);
  }
  return AdamOutcome::applied;
}

}  // namespace trajdiffuse
