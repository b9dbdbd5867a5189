#pragma once

// Synthetic path-finding environments, trajectories on them and an oracle
// that turns ground truth into intent sets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "trajdiffuse/core.hpp"
#include "trajdiffuse/mapguide.hpp"
#include "trajdiffuse/random.hpp"

namespace trajdiffuse {

enum class EnvKind { corridor, rooms, maze };

inline EnvKind parse_env_kind(std::string_view s) {
  if (s == "corridor") return EnvKind::corridor;
  if (s == "rooms") return EnvKind::rooms;
  if (s == "maze") return EnvKind::maze;
  throw Error("unknown environment kind '" + std::string(s) + "' (expected corridor|rooms|maze)");
}

inline std::string_view to_string(EnvKind k) {
  switch (k) {
    case EnvKind::corridor: return "corridor";
    case EnvKind::rooms: return "rooms";
    case EnvKind::maze: return "maze";
  }
  return "?";
}

/// Number of navigable cells 4-connected to the first navigable cell.
inline std::size_t flood_fill_count(const std::vector<std::uint8_t>& cells, std::size_t rows, std::size_t cols) {
  const auto first = std::find(cells.begin(), cells.end(), std::uint8_t{1});
  if (first == cells.end()) return 0;
  std::vector<std::uint8_t> seen(cells.size(), 0);
  std::vector<std::size_t> stack{static_cast<std::size_t>(first - cells.begin())};
  seen[stack.back()] = 1;
  std::size_t count = 0;
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    ++count;
    const std::size_t r = i / cols, c = i % cols;
    auto visit = [&](std::size_t j) {
      if (cells[j] && !seen[j]) {
        seen[j] = 1;
        stack.push_back(j);
      }
    };
    if (r > 0) visit(i - cols);
    if (r + 1 < rows) visit(i + cols);
    if (c > 0) visit(i - 1);
    if (c + 1 < cols) visit(i + 1);
  }
  return count;
}

inline bool is_connected(const std::vector<std::uint8_t>& cells, std::size_t rows, std::size_t cols) {
  const auto nav = static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
  return nav > 0 && flood_fill_count(cells, rows, cols) == nav;
}

namespace detail {

inline std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline Grid corridor_grid(std::size_t rows, std::size_t cols, Rng& rng) {
  Grid g(rows, cols, 0);
  const std::size_t side = std::min(rows, cols);
  const std::size_t w = std::min(side / 2 - 1, std::max<std::size_t>(3, (side + 4) / 5) + uniform_index(rng, 0, 2));
  const std::size_t r0 = uniform_index(rng, 1, rows / 2 - w / 2);
  const std::size_t c0 = uniform_index(rng, cols / 2, cols - w - 1);
  g.fill_rect(r0, 0, r0 + w, c0 + w, 1);   // horizontal arm from the left edge
  g.fill_rect(r0, c0, rows, c0 + w, 1);    // vertical arm down to the bottom edge
  Grid out(rows, cols, 0);
  const bool flip_r = rng() & 1U, flip_c = rng() & 1U;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      out.at(flip_r ? rows - 1 - r : r, flip_c ? cols - 1 - c : c) = g.at(r, c);
  return out;
}

inline Grid rooms_grid(std::size_t rows, std::size_t cols, Rng& rng) {
  Grid g(rows, cols, 1);
  const std::size_t nr = rows >= 48 ? 3 : 2, nc = cols >= 48 ? 3 : 2;
  const std::size_t door = std::max<std::size_t>(3, std::min(rows, cols) / 10);
  std::vector<std::size_t> wr, wc;  // first row/col of each 2-thick wall
  for (std::size_t i = 1; i < nr; ++i) wr.push_back(rows * i / nr - 1);
  for (std::size_t j = 1; j < nc; ++j) wc.push_back(cols * j / nc - 1);
  for (auto r : wr) g.fill_rect(r, 0, r + 2, cols, 0);
  for (auto c : wc) g.fill_rect(0, c, rows, c + 2, 0);

  auto bounds = [](const std::vector<std::size_t>& walls, std::size_t n, std::size_t i) {
    const std::size_t lo = i == 0 ? 0 : walls[i - 1] + 2;
    const std::size_t hi = i == walls.size() ? n : walls[i];
    return std::pair{lo, hi};
  };
  auto open_door = [&](std::size_t lo, std::size_t hi) {
    // A gap of `door` cells somewhere in [lo, hi), one cell away from the ends.
    const std::size_t start = uniform_index(rng, lo + 1, std::max(lo + 1, hi - door - 1));
    return std::pair{start, std::min(hi, start + door)};
  };
  // One door in every wall segment separating two neighbouring rooms.
  for (auto r : wr)
    for (std::size_t j = 0; j < nc; ++j) {
      const auto [lo, hi] = bounds(wc, cols, j);
      const auto [a, b] = open_door(lo, hi);
      g.fill_rect(r, a, r + 2, b, 1);
    }
  for (auto c : wc)
    for (std::size_t i = 0; i < nr; ++i) {
      const auto [lo, hi] = bounds(wr, rows, i);
      const auto [a, b] = open_door(lo, hi);
      g.fill_rect(a, c, b, c + 2, 1);
    }
  // Furniture: a small block in some rooms, kept clear of the walls.
  for (std::size_t i = 0; i < nr; ++i)
    for (std::size_t j = 0; j < nc; ++j) {
      if (rng() % 2 == 0) continue;
      const auto [r_lo, r_hi] = bounds(wr, rows, i);
      const auto [c_lo, c_hi] = bounds(wc, cols, j);
      const std::size_t h = uniform_index(rng, 2, 4), w = uniform_index(rng, 2, 4);
      if (r_hi < r_lo + h + 8 || c_hi < c_lo + w + 8) continue;
      const std::size_t r = uniform_index(rng, r_lo + 4, r_hi - h - 4);
      const std::size_t c = uniform_index(rng, c_lo + 4, c_hi - w - 4);
      g.fill_rect(r, c, r + h, c + w, 0);
    }
  return g;
}

inline Grid maze_grid(std::size_t rows, std::size_t cols, Rng& rng) {
  constexpr std::size_t open = 3, pitch = 4;
  const std::size_t nr = (rows + 1) / pitch, nc = (cols + 1) / pitch;
  Grid g(rows, cols, 0);
  for (std::size_t i = 0; i < nr; ++i)
    for (std::size_t j = 0; j < nc; ++j) g.fill_rect(i * pitch, j * pitch, i * pitch + open, j * pitch + open, 1);
  auto knock = [&](std::size_t i, std::size_t j, std::size_t ni, std::size_t nj) {
    const std::size_t r = std::min(i, ni) * pitch, c = std::min(j, nj) * pitch;
    if (ni != i)
      g.fill_rect(r + open, c, r + pitch, c + open, 1);
    else
      g.fill_rect(r, c + open, r + open, c + pitch, 1);
  };
  // Recursive backtracker over the coarse cells.
  std::vector<std::uint8_t> seen(nr * nc, 0);
  std::vector<std::size_t> stack{0};
  seen[0] = 1;
  while (!stack.empty()) {
    const std::size_t cur = stack.back(), i = cur / nc, j = cur % nc;
    std::vector<std::size_t> next;
    if (i > 0 && !seen[cur - nc]) next.push_back(cur - nc);
    if (i + 1 < nr && !seen[cur + nc]) next.push_back(cur + nc);
    if (j > 0 && !seen[cur - 1]) next.push_back(cur - 1);
    if (j + 1 < nc && !seen[cur + 1]) next.push_back(cur + 1);
    if (next.empty()) {
      stack.pop_back();
      continue;
    }
    const std::size_t n = next[uniform_index(rng, 0, next.size() - 1)];
    knock(i, j, n / nc, n % nc);
    seen[n] = 1;
    stack.push_back(n);
  }
  // A few extra openings so that there is more than one route.
  const std::size_t extra = nr * nc / 8;
  for (std::size_t e = 0; e < extra; ++e) {
    const std::size_t i = uniform_index(rng, 0, nr - 1), j = uniform_index(rng, 0, nc - 1);
    if (rng() & 1U) {
      if (i + 1 < nr) knock(i, j, i + 1, j);
    } else if (j + 1 < nc) {
      knock(i, j, i, j + 1);
    }
  }
  return g;
}

}  // namespace detail

/// Builds a connected environment of the given kind covering at least 20% of
/// the grid. The map origin is the world origin.
inline NavEnvironment generate_environment(EnvKind kind, std::size_t rows, std::size_t cols, double resolution,
                                           std::uint64_t seed) {
  if (rows < 16 || cols < 16) throw Error("environment size must be at least 16x16");
  if (!(resolution > 0.0)) throw Error("resolution must be positive");
  for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
    Rng rng(derive_seed(seed, attempt));
    Grid g = kind == EnvKind::corridor ? detail::corridor_grid(rows, cols, rng)
             : kind == EnvKind::rooms  ? detail::rooms_grid(rows, cols, rng)
                                       : detail::maze_grid(rows, cols, rng);
    const auto nav = static_cast<std::size_t>(std::count(g.cells.begin(), g.cells.end(), std::uint8_t{1}));
    if (5 * nav >= rows * cols && is_connected(g.cells, rows, cols))
      return NavEnvironment(rows, cols, std::move(g.cells), resolution);
  }
  throw Error("could not generate a connected " + std::string(to_string(kind)) + " environment");
}

/// Shortest paths on the 8-connected pixel graph. Diagonal moves may not cut
/// blocked corners. With `clearance` set, only cells whose eight neighbours
/// are all navigable take part, which keeps paths off the walls.
class PathFinder {
public:
  PathFinder(const NavEnvironment& env, bool clearance) : env_(&env), usable_(env.rows() * env.cols(), 0) {
    const auto R = static_cast<long>(env.rows()), C = static_cast<long>(env.cols());
    for (long r = 0; r < R; ++r)
      for (long c = 0; c < C; ++c) {
        bool ok = env.navigable(cell(r, c));
        if (ok && clearance)
          for (long dr = -1; dr <= 1 && ok; ++dr)
            for (long dc = -1; dc <= 1 && ok; ++dc) {
              const long rr = r + dr, cc = c + dc;
              ok = rr >= 0 && cc >= 0 && rr < R && cc < C && env.navigable(cell(rr, cc));
            }
        usable_[static_cast<std::size_t>(r * C + c)] = ok ? 1 : 0;
      }
  }

  bool usable(Cell c) const { return usable_[index(c)] != 0; }
  std::vector<Cell> usable_cells() const {
    std::vector<Cell> out;
    for (std::size_t i = 0; i < usable_.size(); ++i)
      if (usable_[i]) out.push_back({i / env_->cols(), i % env_->cols()});
    return out;
  }

  /// Geodesic distances (meters) from `source`; infinity where unreachable.
  void run(Cell source) {
    const std::size_t n = usable_.size();
    dist_.assign(n, std::numeric_limits<double>::infinity());
    prev_.assign(n, n);
    if (!usable(source)) return;
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist_[index(source)] = 0.0;
    pq.push({0.0, index(source)});
    const auto C = static_cast<long>(env_->cols()), R = static_cast<long>(env_->rows());
    while (!pq.empty()) {
      const auto [d, i] = pq.top();
      pq.pop();
      if (d > dist_[i]) continue;
      const long r = static_cast<long>(i) / C, c = static_cast<long>(i) % C;
      for (long dr = -1; dr <= 1; ++dr)
        for (long dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const long rr = r + dr, cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= R || cc >= C) continue;
          const std::size_t j = static_cast<std::size_t>(rr * C + cc);
          if (!usable_[j]) continue;
          if (dr != 0 && dc != 0 && (!usable_[static_cast<std::size_t>(r * C + cc)] ||
                                     !usable_[static_cast<std::size_t>(rr * C + c)]))
            continue;
          const double nd = d + env_->resolution() * (dr != 0 && dc != 0 ? std::numbers::sqrt2 : 1.0);
          if (nd < dist_[j]) {
            dist_[j] = nd;
            prev_[j] = i;
            pq.push({nd, j});
          }
        }
    }
  }

  double distance(Cell c) const { return dist_[index(c)]; }

  /// Cell sequence from the last source to `target`; empty if unreachable.
  std::vector<Cell> path_to(Cell target) const {
    std::vector<Cell> out;
    if (!std::isfinite(distance(target))) return out;
    for (std::size_t i = index(target); i != usable_.size(); i = prev_[i]) out.push_back({i / env_->cols(), i % env_->cols()});
    std::reverse(out.begin(), out.end());
    return out;
  }

private:
  std::size_t index(Cell c) const { return c.row * env_->cols() + c.col; }
  static Cell cell(long r, long c) { return {static_cast<std::size_t>(r), static_cast<std::size_t>(c)}; }

  const NavEnvironment* env_;
  std::vector<std::uint8_t> usable_;
  std::vector<double> dist_;
  std::vector<std::size_t> prev_;
};

/// Points at equal arc-length spacing along a polyline, endpoints included.
inline Trajectory resample_polyline(const std::vector<Vec2>& pts, std::size_t n) {
  if (pts.empty() || n < 2) throw Error("resample_polyline: need a non-empty polyline and n >= 2");
  std::vector<double> s(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) s[i] = s[i - 1] + (pts[i] - pts[i - 1]).norm();
  Trajectory out(n);
  std::size_t seg = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const double target = s.back() * static_cast<double>(j) / static_cast<double>(n - 1);
    while (seg + 2 < pts.size() && s[seg + 1] < target) ++seg;
    if (pts.size() == 1) {
      out[j] = pts[0];
      continue;
    }
    const double len = s[seg + 1] - s[seg];
    const double w = len > 0.0 ? std::clamp((target - s[seg]) / len, 0.0, 1.0) : 0.0;
    out[j] = pts[seg] + w * (pts[seg + 1] - pts[seg]);
  }
  out.back() = pts.back();
  return out;
}

struct TrajectoryConfig {
  std::size_t frames = 20;
  double dt = 0.4;
  double min_speed = 0.8;
  double max_speed = 1.6;
};

/// A constant-speed walk along a shortest path between two random cells,
/// smoothed with a 3-tap moving average and jittered. Every frame lies on a
/// navigable cell.
inline Trajectory generate_trajectory(const NavEnvironment& env, const TrajectoryConfig& cfg, std::uint64_t seed) {
  if (cfg.frames < 2) throw Error("generate_trajectory: need at least two frames");
  if (!(cfg.min_speed > 0.0) || cfg.max_speed < cfg.min_speed) throw Error("generate_trajectory: bad speed range");
  PathFinder paths(env, /*clearance=*/true);
  auto cells = paths.usable_cells();
  if (cells.empty()) {
    paths = PathFinder(env, false);
    cells = paths.usable_cells();
  }
  constexpr int kAttempts = 50;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    const Cell start = cells[detail::uniform_index(rng, 0, cells.size() - 1)];
    const double speed = std::uniform_real_distribution<double>(cfg.min_speed, cfg.max_speed)(rng);
    const double length = speed * cfg.dt * static_cast<double>(cfg.frames - 1);
    paths.run(start);
    std::vector<Cell> goals;
    for (const auto& c : cells) {
      const double d = paths.distance(c);
      if (d >= 0.85 * length && d <= 1.15 * length) goals.push_back(c);
    }
    if (goals.empty()) continue;
    const auto route = paths.path_to(goals[detail::uniform_index(rng, 0, goals.size() - 1)]);
    std::vector<Vec2> pts;
    for (const auto& c : route) pts.push_back(env.center(c));
    Trajectory traj = resample_polyline(pts, cfg.frames);

    Trajectory smooth = traj;
    for (std::size_t t = 1; t + 1 < traj.size(); ++t) smooth[t] = (1.0 / 3.0) * (traj[t - 1] + traj[t] + traj[t + 1]);
    const double sigma = 0.05 * env.resolution();
    std::normal_distribution<double> n(0.0, sigma);
    for (auto& p : smooth) {
      p.x += std::clamp(n(rng), -2 * sigma, 2 * sigma);
      p.y += std::clamp(n(rng), -2 * sigma, 2 * sigma);
    }
    if (ecfl_check(env, smooth, 0)) return smooth;
  }
  throw Error("generate_trajectory: no navigable trajectory after 50 attempts");
}

struct IntentOracleConfig {
  /// Intent points including the goal.
  std::size_t n_points = 3;
  /// 0-based frames of the intermediate waypoints; empty = evenly spaced.
  std::vector<std::size_t> waypoint_frames;
  double goal_noise_sigma = 0.5;
  bool diversify = false;

  /// Resolved intermediate waypoint frames for the given horizon.
  std::vector<std::size_t> frames_for(std::size_t t_obs, std::size_t t_pred) const {
    if (n_points == 0) throw Error("intent needs at least the goal");
    std::vector<std::size_t> out = waypoint_frames;
    if (out.empty())
      for (std::size_t j = 1; j < n_points; ++j) out.push_back(t_obs - 1 + j * t_pred / n_points);
    if (out.size() + 1 != n_points) throw Error("waypoint frame count does not match the number of intent points");
    for (std::size_t j = 0; j < out.size(); ++j)
      if (out[j] < t_obs || out[j] + 1 >= t_obs + t_pred || (j > 0 && out[j] <= out[j - 1]))
        throw Error("waypoint frames must be increasing and strictly inside the future window");
    return out;
  }
};

/// Nearest navigable cell centre to `p` within `radius` cells of p's pixel.
inline std::optional<Vec2> project_to_navigable(const NavEnvironment& env, Vec2 p, long radius = 10) {
  if (env.navigable_at(p)) return p;
  const Vec2 u = env.to_pixel(p);
  const long r0 = std::lround(u.y), c0 = std::lround(u.x);
  std::optional<Vec2> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (long r = r0 - radius; r <= r0 + radius; ++r)
    for (long c = c0 - radius; c <= c0 + radius; ++c) {
      if (r < 0 || c < 0 || r >= static_cast<long>(env.rows()) || c >= static_cast<long>(env.cols())) continue;
      const Cell cell{static_cast<std::size_t>(r), static_cast<std::size_t>(c)};
      if (!env.navigable(cell)) continue;
      const double d = (env.center(cell) - p).norm();
      if (d < best_d) {
        best_d = d;
        best = env.center(cell);
      }
    }
  return best;
}

/// K intent sets for one agent. Every set clamps the true history; waypoints
/// and goal are the true positions plus Gaussian noise, moved to the nearest
/// navigable cell centre when the noise lands them on a blocked cell. With
/// `diversify`, sets 1..K-1 head to other reachable goals instead, with
/// waypoints along the shortest path from the last observed position.
inline std::vector<ConditionSpec> intent_oracle(const Trajectory& truth, std::size_t t_obs,
                                                const IntentOracleConfig& cfg, const NavEnvironment& env,
                                                std::size_t k_samples, std::uint64_t seed) {
  if (k_samples == 0) throw Error("intent_oracle: need K >= 1");
  if (t_obs == 0 || truth.size() <= t_obs) throw ShapeError("intent_oracle: trajectory shorter than t_obs + 1");
  const std::size_t t_pred = truth.size() - t_obs;
  const auto wp = cfg.frames_for(t_obs, t_pred);
  std::vector<std::size_t> points = wp;
  points.push_back(truth.size() - 1);

  const ConditionSpec exact = condition_from_truth(truth, t_obs, wp);
  auto perturbed = [&](Rng& rng) {
    ConditionSpec c = exact;
    if (cfg.goal_noise_sigma <= 0.0) return c;
    std::normal_distribution<double> n(0.0, cfg.goal_noise_sigma);
    for (std::size_t j = t_obs; j < c.values.size(); ++j) {
      const Vec2 noisy{c.values[j].x + n(rng), c.values[j].y + n(rng)};
      const auto snapped = project_to_navigable(env, noisy);
      if (!snapped) throw Error("intent_oracle: no navigable cell within 10 cells of a perturbed waypoint");
      c.values[j] = *snapped;
    }
    return c;
  };

  std::vector<ConditionSpec> out;
  out.reserve(k_samples);
  if (!cfg.diversify) {
    for (std::size_t k = 0; k < k_samples; ++k) {
      Rng rng(derive_seed(seed, k));
      out.push_back(perturbed(rng));
    }
    return out;
  }

  Rng rng(derive_seed(seed, 0));
  out.push_back(perturbed(rng));
  if (k_samples == 1) return out;

  PathFinder paths(env, false);
  const auto start = env.cell_of(truth[t_obs - 1]);
  double future_len = 0.0;
  for (std::size_t t = t_obs; t < truth.size(); ++t) future_len += (truth[t] - truth[t - 1]).norm();
  std::vector<Cell> candidates;
  const auto true_goal = env.cell_of(truth.back());
  if (start) {
    paths.run(*start);
    for (const auto& c : paths.usable_cells()) {
      const double d = paths.distance(c);
      if (d >= 0.5 * future_len && d <= 1.2 * future_len && !(true_goal && c == *true_goal)) candidates.push_back(c);
    }
  }
  std::shuffle(candidates.begin(), candidates.end(), rng);
  for (std::size_t k = 1; k < k_samples; ++k) {
    if (candidates.empty()) {
      Rng r(derive_seed(seed, k));
      out.push_back(perturbed(r));
      continue;
    }
    const Cell goal = candidates[(k - 1) % candidates.size()];
    std::vector<Vec2> pts{truth[t_obs - 1]};
    for (const auto& c : paths.path_to(goal)) pts.push_back(env.center(c));
    const Trajectory along = resample_polyline(pts, t_pred + 1);  // along[0] is the last observed frame
    ConditionSpec c = exact;
    for (std::size_t j = 0; j < points.size(); ++j) {
      const Vec2 p = along[points[j] - (t_obs - 1)];
      c.values[t_obs + j] = project_to_navigable(env, p).value_or(env.center(goal));
    }
    c.values.back() = env.center(goal);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace trajdiffuse
