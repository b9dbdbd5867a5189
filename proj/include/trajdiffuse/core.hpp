#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace trajdiffuse {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Shape or index precondition violated by the caller.
class ShapeError : public Error {
public:
  using Error::Error;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  friend bool operator==(const Vec2&, const Vec2&) = default;
  double norm() const { return std::hypot(x, y); }
};

/// K samples of T frames of 2-D positions, T = t_obs + t_pred.
///
/// Frames are 0-based: frames [0, t_obs) are the observed history and
/// [t_obs, T) the predicted future.
class TrajBatch {
public:
  TrajBatch() = default;
  TrajBatch(std::size_t k, std::size_t t_obs, std::size_t t_pred)
      : k_(k), t_obs_(t_obs), t_pred_(t_pred), data_(k * (t_obs + t_pred) * 2, 0.0) {
    if (t_obs == 0 || t_pred == 0) throw ShapeError("TrajBatch needs t_obs >= 1 and t_pred >= 1");
  }

  std::size_t k() const { return k_; }
  std::size_t t_obs() const { return t_obs_; }
  std::size_t t_pred() const { return t_pred_; }
  std::size_t frames() const { return t_obs_ + t_pred_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t k, std::size_t t, std::size_t c) { return data_[(k * frames() + t) * 2 + c]; }
  double operator()(std::size_t k, std::size_t t, std::size_t c) const { return data_[(k * frames() + t) * 2 + c]; }

  Vec2 point(std::size_t k, std::size_t t) const { return {(*this)(k, t, 0), (*this)(k, t, 1)}; }
  void set_point(std::size_t k, std::size_t t, Vec2 p) {
    (*this)(k, t, 0) = p.x;
    (*this)(k, t, 1) = p.y;
  }

  /// Frames of sample k as T contiguous (x, y) pairs.
  std::span<double> sample(std::size_t k) { return {data_.data() + k * frames() * 2, frames() * 2}; }
  std::span<const double> sample(std::size_t k) const { return {data_.data() + k * frames() * 2, frames() * 2}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const TrajBatch& o) const {
    return k_ == o.k_ && t_obs_ == o.t_obs_ && t_pred_ == o.t_pred_;
  }
  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const TrajBatch&, const TrajBatch&) = default;

private:
  std::size_t k_ = 0;
  std::size_t t_obs_ = 0;
  std::size_t t_pred_ = 0;
  std::vector<double> data_;
};

/// A single trajectory of T frames.
using Trajectory = std::vector<Vec2>;

inline TrajBatch batch_from(std::span<const Trajectory> trajs, std::size_t t_obs) {
  if (trajs.empty()) throw ShapeError("batch_from: empty trajectory list");
  const std::size_t frames = trajs.front().size();
  if (frames <= t_obs) throw ShapeError("batch_from: trajectory shorter than t_obs + 1");
  TrajBatch out(trajs.size(), t_obs, frames - t_obs);
  for (std::size_t k = 0; k < trajs.size(); ++k) {
    if (trajs[k].size() != frames) throw ShapeError("batch_from: ragged trajectories");
    for (std::size_t t = 0; t < frames; ++t) out.set_point(k, t, trajs[k][t]);
  }
  return out;
}

inline Trajectory trajectory_of(const TrajBatch& b, std::size_t k) {
  Trajectory out(b.frames());
  for (std::size_t t = 0; t < b.frames(); ++t) out[t] = b.point(k, t);
  return out;
}

/// The clamp set for inpainting: observed history, waypoints and the goal.
///
/// `frames` is sorted and holds 0-based frame indices; `values[j]` is the
/// target for `frames[j]`. `n_waypoints` counts intermediate waypoints only
/// (the goal is the last frame and is always present).
struct ConditionSpec {
  std::vector<std::size_t> frames;
  std::vector<Vec2> values;
  std::size_t n_waypoints = 0;

  /// Throws ShapeError unless the invariants hold for the given horizon.
  void validate(std::size_t t_obs, std::size_t t_pred) const {
    const std::size_t total = t_obs + t_pred;
    if (frames.size() != values.size()) throw ShapeError("ConditionSpec: frames/values size mismatch");
    if (!std::is_sorted(frames.begin(), frames.end()) ||
        std::adjacent_find(frames.begin(), frames.end()) != frames.end())
      throw ShapeError("ConditionSpec: frames must be sorted and distinct");
    if (!frames.empty() && frames.back() >= total) throw ShapeError("ConditionSpec: clamp frame out of range");
    if (frames.size() != t_obs + n_waypoints + 1) throw ShapeError("ConditionSpec: wrong number of clamp frames");
    for (std::size_t t = 0; t < t_obs; ++t)
      if (frames[t] != t) throw ShapeError("ConditionSpec: observed frames must all be clamped");
    if (frames.back() != total - 1) throw ShapeError("ConditionSpec: goal frame must be clamped");
  }

  std::vector<std::size_t> waypoint_frames() const {
    return {frames.end() - static_cast<std::ptrdiff_t>(n_waypoints + 1), frames.end() - 1};
  }
  Vec2 goal() const { return values.back(); }

  friend bool operator==(const ConditionSpec&, const ConditionSpec&) = default;
};

/// Builds a clamp set from a ground-truth trajectory: history [0, t_obs),
/// the given waypoint frames, and the final frame.
inline ConditionSpec condition_from_truth(const Trajectory& truth, std::size_t t_obs,
                                          std::span<const std::size_t> waypoint_frames) {
  ConditionSpec c;
  for (std::size_t t = 0; t < t_obs; ++t) c.frames.push_back(t);
  for (auto f : waypoint_frames) c.frames.push_back(f);
  c.frames.push_back(truth.size() - 1);
  for (auto f : c.frames) {
    if (f >= truth.size()) throw ShapeError("condition_from_truth: frame out of range");
    c.values.push_back(truth[f]);
  }
  c.n_waypoints = waypoint_frames.size();
  c.validate(t_obs, truth.size() - t_obs);
  return c;
}

}  // namespace trajdiffuse
