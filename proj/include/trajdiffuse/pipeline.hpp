#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <numeric>
#include <numbers>
#include <optional>
#include <random>
#include <thread>
#include <vector>

#include "trajdiffuse/adam.hpp"
#include "trajdiffuse/checkpoint.hpp"
#include "trajdiffuse/core.hpp"
#include "trajdiffuse/dataset.hpp"
#include "trajdiffuse/denoiser.hpp"
#include "trajdiffuse/diffusion.hpp"
#include "trajdiffuse/mapguide.hpp"
#include "trajdiffuse/random.hpp"
#include "trajdiffuse/schedule.hpp"

namespace trajdiffuse {

/// Runs fn(0..n-1) on up to `jobs` threads. Callers write results by index,
/// so output order never depends on scheduling. The first exception thrown
/// by any task is rethrown.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex m;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(m);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Maps world positions to the model frame: relative to the last observed
/// position, divided by a fixed length scale.
struct Standardizer {
  static constexpr double kDefaultScale = 5.0;
  Vec2 anchor;
  double scale = kDefaultScale;

  Vec2 to_model(Vec2 p) const { return {(p.x - anchor.x) / scale, (p.y - anchor.y) / scale}; }
  Vec2 to_world(Vec2 p) const { return {p.x * scale + anchor.x, p.y * scale + anchor.y}; }
};

inline ConditionSpec standardize(const ConditionSpec& c, const Standardizer& s) {
  ConditionSpec out = c;
  for (auto& v : out.values) v = s.to_model(v);
  return out;
}

struct PredictionRequest {
  Trajectory observed;                 ///< t_obs frames, meters
  std::size_t t_pred = 12;
  std::vector<ConditionSpec> intents;  ///< one per sample
  const NavEnvironment* env = nullptr;
  std::uint64_t seed = 0;
  bool guidance_on = true;
  /// Overrides the per-sample seeds otherwise derived from `seed`.
  std::vector<std::uint64_t> sample_seeds;
};

struct PredictionResult {
  TrajBatch trajectories;
  std::vector<bool> per_sample_ecfl;
};

struct SamplerOptions {
  GuidanceConfig guidance{};
  std::size_t jobs = 1;
};

namespace detail {

inline void require_usable_model(const ModelParams& params, const NoiseSchedule& schedule) {
  if (!params.all_finite()) throw Error("model parameters contain NaN or Inf");
  if (schedule.n_steps() != params.arch().n_steps)
    throw Error("schedule has " + std::to_string(schedule.n_steps()) + " steps but the model was built for " +
                std::to_string(params.arch().n_steps));
}

/// One reverse chain for one intent, in the model frame until the end.
inline Trajectory sample_one(const ModelParams& params, const NoiseSchedule& schedule, const ConditionSpec& world_cond,
                             const Standardizer& st, std::size_t t_obs, std::size_t t_pred, const NavEnvironment* env,
                             bool guidance_on, const GuidanceConfig& gcfg, std::uint64_t seed) {
  Rng rng(seed);
  const ConditionSpec cond = standardize(world_cond, st);
  TrajBatch x(1, t_obs, t_pred);
  fill_normal(x, rng);
  TrajBatch noise(1, t_obs, t_pred);
  Trajectory world(x.frames());
  for (std::size_t i = schedule.n_steps(); i >= 1; --i) {
    apply_conditioning_inplace(x, 0, cond);
    const TrajBatch x0 = denoiser_forward(params, x, i);
    fill_normal(noise, rng);
    x = reverse_step(x, x0, i, schedule, noise);
    if (guidance_on) {
      for (std::size_t t = 0; t < x.frames(); ++t) world[t] = st.to_world(x.point(0, t));
      const auto delta = guidance_delta(*env, world, t_obs, gcfg);
      for (std::size_t t = t_obs; t < x.frames(); ++t) x.set_point(0, t, x.point(0, t) + (1.0 / st.scale) * delta[t]);
    }
    apply_conditioning_inplace(x, 0, cond);
  }
  for (std::size_t t = 0; t < x.frames(); ++t) world[t] = st.to_world(x.point(0, t));
  // Final pass in world units so that clamped frames are exact.
  for (std::size_t j = 0; j < world_cond.frames.size(); ++j) world[world_cond.frames[j]] = world_cond.values[j];
  return world;
}

}  // namespace detail

/// Guided (or unguided) conditional sampling of one trajectory per intent.
inline PredictionResult predict(const PredictionRequest& req, const ModelParams& params, const NoiseSchedule& schedule,
                                const SamplerOptions& opts = {}) {
  detail::require_usable_model(params, schedule);
  const std::size_t t_obs = req.observed.size();
  if (t_obs == 0) throw ShapeError("predict: empty observed history");
  if (t_obs + req.t_pred != params.arch().horizon)
    throw ShapeError("predict: t_obs + t_pred = " + std::to_string(t_obs + req.t_pred) + " but the model horizon is " +
                     std::to_string(params.arch().horizon));
  if (req.intents.empty()) throw Error("predict: need at least one intent");
  if (req.guidance_on && req.env == nullptr) throw Error("predict: guidance requested without an environment");
  if (!req.sample_seeds.empty() && req.sample_seeds.size() != req.intents.size())
    throw Error("predict: sample_seeds must have one entry per intent");
  for (const auto& p : req.observed)
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw Error("predict: observed history is not finite");
  opts.guidance.validate();

  std::vector<ConditionSpec> conds = req.intents;
  for (auto& c : conds) {
    c.validate(t_obs, req.t_pred);
    for (std::size_t t = 0; t < t_obs; ++t) c.values[t] = req.observed[t];
  }
  const Standardizer st{req.observed.back()};
  const std::size_t K = conds.size();
  std::vector<Trajectory> out(K);
  parallel_for(K, opts.jobs, [&](std::size_t k) {
    const std::uint64_t seed = req.sample_seeds.empty() ? derive_seed(req.seed, k) : req.sample_seeds[k];
    out[k] = detail::sample_one(params, schedule, conds[k], st, t_obs, req.t_pred, req.env, req.guidance_on,
                                opts.guidance, seed);
  });

  PredictionResult r{batch_from(out, t_obs), {}};
  for (const auto& t : out) r.per_sample_ecfl.push_back(req.env ? ecfl_check(*req.env, t, t_obs) : false);
  return r;
}

// --- training -------------------------------------------------------------

struct TrainingExample {
  Trajectory truth;
  ConditionSpec cond;  ///< ground-truth clamp set
};

struct TrainConfig {
  std::size_t n_epochs = 200;
  std::size_t batch_size = 16;
  AdamConfig adam{};
  LossWeighting weighting = LossWeighting::simple;
  std::uint64_t seed = 0;
  bool augment_rotation = true;
  double position_scale = Standardizer::kDefaultScale;
  std::size_t jobs = 1;
};

struct TrainingLog {
  std::vector<double> epoch_loss;
  std::size_t skipped_steps = 0;
  friend bool operator==(const TrainingLog&, const TrainingLog&) = default;
};

/// Ground-truth training pairs for every agent of a dataset.
inline std::vector<TrainingExample> training_examples(const Dataset& d, const IntentOracleConfig& intent = {}) {
  const auto wp = intent.frames_for(d.t_obs, d.t_pred);
  std::vector<TrainingExample> out;
  for (const auto& s : d.scenes)
    for (const auto& a : s.agents) out.push_back({a.trajectory, condition_from_truth(a.trajectory, d.t_obs, wp)});
  return out;
}

namespace detail {

/// Standardised (and optionally rotated) clean trajectory for one example.
inline TrajBatch model_frame(const TrainingExample& ex, std::size_t t_obs, double scale, double angle) {
  const Standardizer st{ex.truth[t_obs - 1], scale};
  const double c = std::cos(angle), s = std::sin(angle);
  TrajBatch b(1, t_obs, ex.truth.size() - t_obs);
  for (std::size_t t = 0; t < ex.truth.size(); ++t) {
    const Vec2 p = st.to_model(ex.truth[t]);
    b.set_point(0, t, {c * p.x - s * p.y, s * p.x + c * p.y});
  }
  return b;
}

}  // namespace detail

/// Trains `params` in place. Per example: a random step, fresh noise, the
/// clean trajectory's clamped frames written into the noisy input, and the
/// future-frame loss on the denoiser's clean estimate. Gradients are summed
/// in example order, so the result does not depend on `jobs`.
inline TrainingLog train(const std::vector<TrainingExample>& data, ModelParams& params, const NoiseSchedule& schedule,
                         const TrainConfig& cfg, const std::function<void(std::size_t, double)>& on_epoch = {}) {
  if (data.empty()) throw Error("train: empty dataset");
  if (cfg.batch_size == 0) throw Error("train: batch size must be positive");
  detail::require_usable_model(params, schedule);
  const std::size_t horizon = params.arch().horizon;
  const std::size_t t_obs = data.front().cond.frames.size() - data.front().cond.n_waypoints - 1;
  for (const auto& ex : data) {
    if (ex.truth.size() != horizon) throw ShapeError("train: trajectory length differs from the model horizon");
    ex.cond.validate(t_obs, horizon - t_obs);
  }
  const std::size_t N = schedule.n_steps();
  const std::size_t first_step = cfg.weighting == LossWeighting::paper ? 2 : 1;
  if (first_step > N) throw Error("train: paper weighting needs at least two diffusion steps");

  const std::size_t P = params.values().size();
  AdamState<float> adam(P);
  TrainingLog log;
  std::vector<std::size_t> order(data.size());
  std::vector<std::vector<float>> grads;
  std::vector<double> losses;
  std::vector<float> total(P);

  for (std::size_t epoch = 0; epoch < cfg.n_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, 2 * epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_sum = 0.0;

    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t B = std::min(cfg.batch_size, order.size() - b0);
      grads.assign(B, {});
      losses.assign(B, 0.0);
      parallel_for(B, cfg.jobs, [&](std::size_t j) {
        const std::size_t idx = order[b0 + j];
        Rng rng(derive_seed(derive_seed(cfg.seed, 2 * epoch + 1), b0 + j));
        const double angle =
            cfg.augment_rotation ? std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng) : 0.0;
        const TrajBatch x0 = detail::model_frame(data[idx], t_obs, cfg.position_scale, angle);
        const std::size_t i = std::uniform_int_distribution<std::size_t>(first_step, N)(rng);
        TrajBatch xi = forward_noise(x0, i, normal_like(x0, rng), schedule);
        for (auto f : data[idx].cond.frames) xi.set_point(0, f, x0.point(0, f));
        const TrajBatch pred = denoiser_forward(params, xi, i);
        losses[j] = training_loss(pred, x0, i, schedule, cfg.weighting);
        if (!std::isfinite(losses[j]))
          throw Error("non-finite training loss at epoch " + std::to_string(epoch + 1) + ", example " +
                      std::to_string(idx) + ", step " + std::to_string(i));
        TrajBatch up = training_loss_gradient(pred, x0, i, schedule, cfg.weighting);
        for (auto& v : up.data()) v /= static_cast<double>(B);
        grads[j] = denoiser_backward(params, xi, i, up);
      });
      std::fill(total.begin(), total.end(), 0.0f);
      for (std::size_t j = 0; j < B; ++j) {
        for (std::size_t p = 0; p < P; ++p) total[p] += grads[j][p];
        epoch_sum += losses[j];
      }
      if (adam_update<float>(params.values(), total, adam, cfg.adam) == AdamOutcome::skipped_non_finite)
        ++log.skipped_steps;
    }
    log.epoch_loss.push_back(epoch_sum / static_cast<double>(data.size()));
    if (on_epoch) on_epoch(epoch, log.epoch_loss.back());
  }
  return log;
}

}  // namespace trajdiffuse
