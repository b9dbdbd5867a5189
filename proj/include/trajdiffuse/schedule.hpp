#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "trajdiffuse/core.hpp"

namespace trajdiffuse {

/// Variance schedule with every closed-form coefficient precomputed.
///
/// Step indices are 1-based: step i lives at vector index i - 1, and
/// alpha_bar(0) is taken to be 1.
class NoiseSchedule {
public:
  static constexpr double kAlphaMin = 0.001;
  static constexpr double kAlphaMax = 0.9999;
  static constexpr double kDefaultOffset = 0.008;

  std::size_t n_steps() const { return alphas_.size(); }
  double offset() const { return offset_; }

  const std::vector<double>& alphas() const { return alphas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }
  const std::vector<double>& posterior_vars() const { return posterior_vars_; }
  const std::vector<double>& loss_weights() const { return loss_weights_; }

  double alpha(std::size_t i) const { return alphas_[checked(i) - 1]; }
  double alpha_bar(std::size_t i) const { return i == 0 ? 1.0 : alpha_bars_[checked(i) - 1]; }
  double posterior_var(std::size_t i) const { return posterior_vars_[checked(i) - 1]; }
  double loss_weight(std::size_t i) const { return loss_weights_[checked(i) - 1]; }

  std::size_t checked(std::size_t i) const {
    if (i < 1 || i > n_steps())
      throw ShapeError("step index " + std::to_string(i) + " outside [1, " + std::to_string(n_steps()) + "]");
    return i;
  }

  friend NoiseSchedule build_cosine_schedule(std::size_t n_steps, double offset);
  friend bool operator==(const NoiseSchedule&, const NoiseSchedule&) = default;

private:
  double offset_ = kDefaultOffset;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
  std::vector<double> posterior_vars_;
  std::vector<double> loss_weights_;
};

/// Squared-cosine alpha-bar profile with a small offset; per-step alphas are
/// clipped to [kAlphaMin, kAlphaMax] and the cumulative product recomputed.
inline NoiseSchedule build_cosine_schedule(std::size_t n_steps, double offset = NoiseSchedule::kDefaultOffset) {
  if (n_steps == 0) throw Error("cosine schedule needs at least one step");
  if (!(offset > 0.0) || !std::isfinite(offset)) throw Error("cosine schedule offset must be positive");

  const double n = static_cast<double>(n_steps);
  auto profile = [&](double i) {
    const double c = std::cos((i / n + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
    return c * c;
  };

  NoiseSchedule s;
  s.offset_ = offset;
  s.alphas_.resize(n_steps);
  s.alpha_bars_.resize(n_steps);
  s.posterior_vars_.resize(n_steps);
  s.loss_weights_.resize(n_steps);

  const double f0 = profile(0.0);
  double prev_raw = 1.0;
  for (std::size_t i = 1; i <= n_steps; ++i) {
    const double raw = profile(static_cast<double>(i)) / f0;
    s.alphas_[i - 1] = std::clamp(raw / prev_raw, NoiseSchedule::kAlphaMin, NoiseSchedule::kAlphaMax);
    prev_raw = raw;
  }

  double bar = 1.0;
  for (std::size_t i = 1; i <= n_steps; ++i) {
    const double a = s.alphas_[i - 1];
    const double bar_prev = bar;
    bar *= a;
    s.alpha_bars_[i - 1] = bar;
    s.posterior_vars_[i - 1] = (1.0 - a) * (1.0 - bar_prev) / (1.0 - bar);
    s.loss_weights_[i - 1] = bar_prev * (1.0 - a) * (1.0 - a) / ((1.0 - bar) * (1.0 - bar));
  }
  return s;
}

struct StepCoefficients {
  double sqrt_alpha_bar;
  double sqrt_one_minus_alpha_bar;
  double posterior_var;
  double loss_weight;
};

inline StepCoefficients coefficients_at(const NoiseSchedule& s, std::size_t i) {
  const double bar = s.alpha_bar(i);
  return {std::sqrt(bar), std::sqrt(1.0 - bar), s.posterior_var(i), s.loss_weight(i)};
}

}  // namespace trajdiffuse
