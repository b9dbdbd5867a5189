#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string_view>

#include "trajdiffuse/core.hpp"
#include "trajdiffuse/schedule.hpp"

namespace trajdiffuse {

enum class LossWeighting { simple, paper };

inline LossWeighting parse_weighting(std::string_view s) {
  if (s == "simple") return LossWeighting::simple;
  if (s == "paper") return LossWeighting::paper;
  throw Error("unknown loss weighting '" + std::string(s) + "' (expected simple|paper)");
}

inline std::string_view to_string(LossWeighting w) { return w == LossWeighting::simple ? "simple" : "paper"; }

namespace detail {
inline void require_same_shape(const TrajBatch& a, const TrajBatch& b, const char* what) {
  if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": shape mismatch");
}
}  // namespace detail

/// Samples the closed-form marginal q(x_i | x_0): sqrt(abar_i) x_0 + sqrt(1 - abar_i) noise.
inline TrajBatch forward_noise(const TrajBatch& clean, std::size_t i, const TrajBatch& noise,
                               const NoiseSchedule& schedule) {
  detail::require_same_shape(clean, noise, "forward_noise");
  const auto c = coefficients_at(schedule, i);
  TrajBatch out = clean;
  auto& d = out.data();
  const auto& n = noise.data();
  for (std::size_t j = 0; j < d.size(); ++j) d[j] = c.sqrt_alpha_bar * d[j] + c.sqrt_one_minus_alpha_bar * n[j];
  return out;
}

/// Overwrites the clamped frames of every sample with the clamp targets.
inline void apply_conditioning_inplace(TrajBatch& traj, std::size_t k, const ConditionSpec& cond) {
  if (cond.frames.size() != cond.values.size()) throw ShapeError("apply_conditioning: frames/values size mismatch");
  for (std::size_t j = 0; j < cond.frames.size(); ++j) {
    if (cond.frames[j] >= traj.frames()) throw ShapeError("apply_conditioning: clamp frame out of range");
    traj.set_point(k, cond.frames[j], cond.values[j]);
  }
}

inline TrajBatch apply_conditioning(const TrajBatch& traj, const ConditionSpec& cond) {
  TrajBatch out = traj;
  for (std::size_t k = 0; k < out.k(); ++k) apply_conditioning_inplace(out, k, cond);
  return out;
}

/// Per-sample clamp sets; `conds.size()` must equal the batch size.
inline TrajBatch apply_conditioning(const TrajBatch& traj, std::span<const ConditionSpec> conds) {
  if (conds.size() != traj.k()) throw ShapeError("apply_conditioning: one ConditionSpec per sample required");
  TrajBatch out = traj;
  for (std::size_t k = 0; k < out.k(); ++k) apply_conditioning_inplace(out, k, conds[k]);
  return out;
}

/// Mean of q(x_{i-1} | x_i, x_0) with x_0 replaced by the denoiser's estimate.
inline TrajBatch posterior_mean(const TrajBatch& x0_pred, const TrajBatch& x_i, std::size_t i,
                                const NoiseSchedule& schedule) {
  detail::require_same_shape(x0_pred, x_i, "posterior_mean");
  const double a = schedule.alpha(i);
  const double bar = schedule.alpha_bar(i);
  const double bar_prev = schedule.alpha_bar(i - 1);
  const double denom = 1.0 - bar;
  // At i = 1 (abar_0 = 1) these are exactly 0 and 1.
  const double wx = std::sqrt(a) * (1.0 - bar_prev) / denom;
  const double w0 = std::sqrt(bar_prev) * (1.0 - a) / denom;
  TrajBatch out = x_i;
  auto& d = out.data();
  const auto& p = x0_pred.data();
  for (std::size_t j = 0; j < d.size(); ++j) d[j] = wx * d[j] + w0 * p[j];
  return out;
}

/// One ancestral step: posterior mean plus sigma_q(i) * noise. At i = 1 the
/// posterior variance is zero and the noise term vanishes.
inline TrajBatch reverse_step(const TrajBatch& x_i, const TrajBatch& x0_pred, std::size_t i,
                              const NoiseSchedule& schedule, const TrajBatch& noise) {
  detail::require_same_shape(x_i, noise, "reverse_step");
  TrajBatch out = posterior_mean(x0_pred, x_i, i, schedule);
  const double sigma = std::sqrt(schedule.posterior_var(i));
  if (sigma == 0.0) return out;
  auto& d = out.data();
  const auto& n = noise.data();
  for (std::size_t j = 0; j < d.size(); ++j) d[j] += sigma * n[j];
  return out;
}

/// Weight applied on top of the per-element MSE for step i.
inline double loss_scale(std::size_t i, const NoiseSchedule& schedule, LossWeighting weighting) {
  if (weighting == LossWeighting::simple) {
    schedule.checked(i);
    return 1.0;
  }
  if (i < 2) throw Error("paper loss weighting is singular at step 1 (zero posterior variance)");
  return schedule.loss_weight(i) / (2.0 * schedule.posterior_var(i));
}

/// Mean squared error over future frames, scaled by lambda(alpha_i) / (2 sigma_q^2(i))
/// in paper mode.
inline double training_loss(const TrajBatch& x0_pred, const TrajBatch& x0_true, std::size_t i,
                            const NoiseSchedule& schedule, LossWeighting weighting) {
  detail::require_same_shape(x0_pred, x0_true, "training_loss");
  const double scale = loss_scale(i, schedule, weighting);
  double sum = 0.0;
  for (std::size_t k = 0; k < x0_pred.k(); ++k)
    for (std::size_t t = x0_pred.t_obs(); t < x0_pred.frames(); ++t)
      for (std::size_t c = 0; c < 2; ++c) {
        const double e = x0_pred(k, t, c) - x0_true(k, t, c);
        sum += e * e;
      }
  const double n = static_cast<double>(x0_pred.k() * x0_pred.t_pred() * 2);
  return scale * sum / n;
}

/// d training_loss / d x0_pred; zero on observed frames.
inline TrajBatch training_loss_gradient(const TrajBatch& x0_pred, const TrajBatch& x0_true, std::size_t i,
                                        const NoiseSchedule& schedule, LossWeighting weighting) {
  detail::require_same_shape(x0_pred, x0_true, "training_loss_gradient");
  const double scale = loss_scale(i, schedule, weighting);
  const double n = static_cast<double>(x0_pred.k() * x0_pred.t_pred() * 2);
  TrajBatch g(x0_pred.k(), x0_pred.t_obs(), x0_pred.t_pred());
  for (std::size_t k = 0; k < x0_pred.k(); ++k)
    for (std::size_t t = x0_pred.t_obs(); t < x0_pred.frames(); ++t)
      for (std::size_t c = 0; c < 2; ++c) g(k, t, c) = scale * 2.0 * (x0_pred(k, t, c) - x0_true(k, t, c)) / n;
  return g;
}

}  // namespace trajdiffuse
