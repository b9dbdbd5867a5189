#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trajdiffuse/core.hpp"

namespace trajdiffuse {

struct Cell {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Row-major occupancy grid used while building maps; 1 = navigable.
struct Grid {
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint8_t> cells;

  Grid(std::size_t r, std::size_t c, std::uint8_t fill) : rows(r), cols(c), cells(r * c, fill) {}
  std::uint8_t& at(std::size_t r, std::size_t c) { return cells[r * cols + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return cells[r * cols + c]; }
  void fill_rect(std::size_t r0, std::size_t c0, std::size_t r1, std::size_t c1, std::uint8_t v) {
    for (std::size_t r = r0; r < std::min(r1, rows); ++r)
      for (std::size_t c = c0; c < std::min(c1, cols); ++c) at(r, c) = v;
  }
};

namespace detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Exact 1-D squared distance transform (lower envelope of parabolas).
/// Infinite entries never enter the envelope; if all entries are infinite the
/// output is all infinite.
inline void squared_distance_1d(std::span<const double> f, std::span<double> out, std::vector<std::size_t>& v,
                                std::vector<double>& z) {
  const std::size_t n = f.size();
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  std::size_t k = 0;
  bool any = false;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (!any) {
      any = true;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    const auto dq = static_cast<double>(q);
    // z[0] = -inf, so the loop always stops at k = 0.
    auto intersect = [&](std::size_t p) {
      const auto dp = static_cast<double>(p);
      return ((f[q] + dq * dq) - (f[p] + dp * dp)) / (2.0 * dq - 2.0 * dp);
    };
    double s = intersect(v[k]);
    while (s <= z[k]) s = intersect(v[--k]);
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (!any) {
    std::fill(out.begin(), out.end(), kInf);
    return;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const auto dq = static_cast<double>(q);
    while (z[k + 1] < dq) ++k;
    const double d = dq - static_cast<double>(v[k]);
    out[q] = d * d + f[v[k]];
  }
}

}  // namespace detail

/// Euclidean distance (meters) from every pixel centre to the nearest
/// navigable pixel centre. `navigable` is row-major rows x cols.
inline std::vector<double> distance_transform(std::span<const std::uint8_t> navigable, std::size_t rows,
                                              std::size_t cols, double resolution) {
  if (rows == 0 || cols == 0 || navigable.size() != rows * cols)
    throw ShapeError("distance_transform: grid must be non-empty and rows*cols sized");
  if (!(resolution > 0.0)) throw Error("distance_transform: resolution must be positive");
  if (std::none_of(navigable.begin(), navigable.end(), [](std::uint8_t b) { return b != 0; }))
    throw Error("distance_transform: grid has no navigable pixel");

  std::vector<double> d2(rows * cols);
  std::vector<std::size_t> v;
  std::vector<double> z, f(std::max(rows, cols)), out(std::max(rows, cols));
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) f[r] = navigable[r * cols + c] ? 0.0 : detail::kInf;
    detail::squared_distance_1d(std::span(f.data(), rows), std::span(out.data(), rows), v, z);
    for (std::size_t r = 0; r < rows; ++r) d2[r * cols + c] = out[r];
  }
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(d2.begin() + static_cast<std::ptrdiff_t>(r * cols), cols, f.begin());
    detail::squared_distance_1d(std::span(f.data(), cols), std::span(out.data(), cols), v, z);
    for (std::size_t c = 0; c < cols; ++c) d2[r * cols + c] = resolution * std::sqrt(out[c]);
  }
  return d2;
}

/// Per-pixel gradient (d/dx, d/dy) of a distance field, where x runs along
/// columns and y along rows. Central differences inside, one-sided at the
/// borders, zero along an axis of length one.
inline std::vector<Vec2> gradient_field(std::span<const double> dist, std::size_t rows, std::size_t cols,
                                        double resolution) {
  if (dist.size() != rows * cols) throw ShapeError("gradient_field: field size mismatch");
  auto at = [&](std::size_t r, std::size_t c) { return dist[r * cols + c]; };
  auto diff = [&](std::size_t i, std::size_t n, auto&& sample) {
    if (n == 1) return 0.0;
    if (i == 0) return (sample(1) - sample(0)) / resolution;
    if (i == n - 1) return (sample(n - 1) - sample(n - 2)) / resolution;
    return (sample(i + 1) - sample(i - 1)) / (2.0 * resolution);
  };
  std::vector<Vec2> g(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      g[r * cols + c].x = diff(c, cols, [&](std::size_t j) { return at(r, j); });
      g[r * cols + c].y = diff(r, rows, [&](std::size_t i) { return at(i, c); });
    }
  return g;
}

/// Binary navigability grid with its distance and gradient fields.
///
/// Pixel (row, col) has its centre at world (origin.x + col * resolution,
/// origin.y + row * resolution). A world point belongs to the pixel whose
/// centre is nearest, rounding halves away from zero.
class NavEnvironment {
public:
  NavEnvironment() = default;
  NavEnvironment(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> navigable, double resolution,
                 Vec2 origin = {})
      : rows_(rows), cols_(cols), resolution_(resolution), origin_(origin), nav_(std::move(navigable)) {
    for (auto& b : nav_) b = b ? 1 : 0;
    dist_ = distance_transform(nav_, rows_, cols_, resolution_);
    grad_ = gradient_field(dist_, rows_, cols_, resolution_);
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double resolution() const { return resolution_; }
  Vec2 origin() const { return origin_; }
  const std::vector<std::uint8_t>& nav_grid() const { return nav_; }
  const std::vector<double>& dist_field() const { return dist_; }
  const std::vector<Vec2>& grad_field() const { return grad_; }

  bool navigable(Cell c) const { return nav_[c.row * cols_ + c.col] != 0; }
  double distance(Cell c) const { return dist_[c.row * cols_ + c.col]; }
  Vec2 gradient(Cell c) const { return grad_[c.row * cols_ + c.col]; }
  Vec2 center(Cell c) const {
    return {origin_.x + static_cast<double>(c.col) * resolution_, origin_.y + static_cast<double>(c.row) * resolution_};
  }

  /// Continuous (col, row) pixel coordinate of a world point.
  Vec2 to_pixel(Vec2 p) const { return {(p.x - origin_.x) / resolution_, (p.y - origin_.y) / resolution_}; }

  std::optional<Cell> cell_of(Vec2 p) const {
    const Vec2 u = to_pixel(p);
    const double c = std::round(u.x), r = std::round(u.y);
    if (!(c >= 0.0 && r >= 0.0 && c < static_cast<double>(cols_) && r < static_cast<double>(rows_)))
      return std::nullopt;
    return Cell{static_cast<std::size_t>(r), static_cast<std::size_t>(c)};
  }

  /// False for points off the map.
  bool navigable_at(Vec2 p) const {
    const auto c = cell_of(p);
    return c && navigable(*c);
  }

  friend bool operator==(const NavEnvironment& a, const NavEnvironment& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.resolution_ == b.resolution_ && a.origin_ == b.origin_ &&
           a.nav_ == b.nav_;
  }

private:
  std::size_t rows_ = 0, cols_ = 0;
  double resolution_ = 1.0;
  Vec2 origin_;
  std::vector<std::uint8_t> nav_;
  std::vector<double> dist_;
  std::vector<Vec2> grad_;
};

/// Bilinear interpolation of the gradient field at a world point. Inside the
/// map extent the pixel coordinate is clamped to the centre hull. Off the map
/// the result is the unit vector pointing away from the map, i.e. the
/// direction in which distance to navigable space grows, so that descending
/// it leads back onto the map.
inline Vec2 sample_gradient(const NavEnvironment& env, Vec2 pos) {
  const Vec2 u = env.to_pixel(pos);
  const double max_c = static_cast<double>(env.cols() - 1), max_r = static_cast<double>(env.rows() - 1);
  if (!env.cell_of(pos)) {
    const Vec2 out{u.x - std::clamp(u.x, 0.0, max_c), u.y - std::clamp(u.y, 0.0, max_r)};
    const double n = out.norm();
    if (n > 0.0 && std::isfinite(n)) return (1.0 / n) * out;
    return {std::isnan(u.x) ? 0.0 : 1.0, 0.0};
  }
  const double cu = std::clamp(u.x, 0.0, max_c), ru = std::clamp(u.y, 0.0, max_r);
  const auto c0 = static_cast<std::size_t>(std::min(std::floor(cu), std::max(max_c - 1.0, 0.0)));
  const auto r0 = static_cast<std::size_t>(std::min(std::floor(ru), std::max(max_r - 1.0, 0.0)));
  const std::size_t c1 = std::min(c0 + 1, env.cols() - 1), r1 = std::min(r0 + 1, env.rows() - 1);
  const double wc = cu - static_cast<double>(c0), wr = ru - static_cast<double>(r0);
  const Vec2 g00 = env.gradient({r0, c0}), g01 = env.gradient({r0, c1});
  const Vec2 g10 = env.gradient({r1, c0}), g11 = env.gradient({r1, c1});
  return (1 - wr) * ((1 - wc) * g00 + wc * g01) + wr * ((1 - wc) * g10 + wc * g11);
}

struct GuidanceConfig {
  std::size_t n_grad_steps = 10;
  /// Length multiplier on each descent step, in meters per unit gradient.
  /// Non-positive means "one pixel", i.e. the map resolution.
  double step_scale = 0.0;

  double resolved_step(const NavEnvironment& env) const { return step_scale > 0.0 ? step_scale : env.resolution(); }
  void validate() const {
    if (n_grad_steps == 0) throw Error("guidance needs at least one gradient step");
    if (!std::isfinite(step_scale)) throw Error("guidance step scale must be finite");
  }
};

/// Iterative suffix-shift correction of one trajectory. Each future frame in
/// turn takes up to `n_grad_steps` descent steps on the distance field, and
/// every step is also applied to all later frames. Frames already on a
/// navigable cell take no step. Returns the per-frame displacement; observed
/// frames always get zero.
inline std::vector<Vec2> guidance_delta(const NavEnvironment& env, std::span<const Vec2> traj, std::size_t t_obs,
                                        const GuidanceConfig& cfg) {
  cfg.validate();
  if (t_obs > traj.size()) throw ShapeError("guidance_delta: t_obs exceeds trajectory length");
  const double scale = cfg.resolved_step(env);
  std::vector<Vec2> acc(traj.size());
  for (std::size_t f = t_obs; f < traj.size(); ++f) {
    for (std::size_t s = 0; s < cfg.n_grad_steps; ++s) {
      const Vec2 at = traj[f] + acc[f];
      if (env.navigable_at(at)) break;
      const Vec2 step = -scale * sample_gradient(env, at);
      for (std::size_t g = f; g < traj.size(); ++g) acc[g] += step;
    }
  }
  return acc;
}

/// True iff every future frame lies on a navigable cell.
inline bool ecfl_check(const NavEnvironment& env, std::span<const Vec2> traj, std::size_t t_obs) {
  for (std::size_t t = t_obs; t < traj.size(); ++t)
    if (!env.navigable_at(traj[t])) return false;
  return true;
}

}  // namespace trajdiffuse
