#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "trajdiffuse/core.hpp"
#include "trajdiffuse/mapguide.hpp"

namespace trajdiffuse {

struct DisplacementErrors {
  double ade = 0.0;
  double fde = 0.0;
};

namespace detail {
inline void require_truth(const TrajBatch& p, std::span<const Vec2> truth, const char* what) {
  if (p.k() == 0) throw ShapeError(std::string(what) + ": no predictions");
  if (truth.size() != p.frames()) throw ShapeError(std::string(what) + ": ground truth length differs from predictions");
}
}  // namespace detail

/// Best-of-K average and final displacement over the future frames. Each
/// error takes its own minimum over samples.
inline DisplacementErrors ade_fde(const TrajBatch& preds, std::span<const Vec2> truth) {
  detail::require_truth(preds, truth, "ade_fde");
  DisplacementErrors best{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  const std::size_t last = preds.frames() - 1;
  for (std::size_t k = 0; k < preds.k(); ++k) {
    double sum = 0.0;
    for (std::size_t t = preds.t_obs(); t < preds.frames(); ++t) sum += (preds.point(k, t) - truth[t]).norm();
    best.ade = std::min(best.ade, sum / static_cast<double>(preds.t_pred()));
    best.fde = std::min(best.fde, (preds.point(k, last) - truth[last]).norm());
  }
  return best;
}

inline constexpr double kKdeDensityFloor = 1e-12;
inline constexpr double kKdeFallbackBandwidth = 1e-3;

/// Scott's-rule bandwidth for one coordinate: sample standard deviation
/// (n - 1 denominator) times n^(-1/6).
inline double scott_bandwidth(std::span<const double> xs) {
  const auto n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const double h = sd * std::pow(n, -1.0 / 6.0);
  return h > 0.0 ? h : kKdeFallbackBandwidth;
}

/// Mean over future frames of -ln p(truth) under a product-Gaussian KDE of
/// the K predicted positions at that frame.
inline double kde_nll(const TrajBatch& preds, std::span<const Vec2> truth) {
  detail::require_truth(preds, truth, "kde_nll");
  if (preds.k() < 2) throw ShapeError("kde_nll: need at least two samples");
  const std::size_t K = preds.k();
  std::vector<double> xs(K), ys(K);
  double total = 0.0;
  for (std::size_t t = preds.t_obs(); t < preds.frames(); ++t) {
    for (std::size_t k = 0; k < K; ++k) {
      xs[k] = preds(k, t, 0);
      ys[k] = preds(k, t, 1);
    }
    const double hx = scott_bandwidth(xs), hy = scott_bandwidth(ys);
    double density = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double ux = (truth[t].x - xs[k]) / hx, uy = (truth[t].y - ys[k]) / hy;
      density += std::exp(-0.5 * (ux * ux + uy * uy));
    }
    density /= static_cast<double>(K) * 2.0 * std::numbers::pi * hx * hy;
    total += -std::log(std::max(density, kKdeDensityFloor));
  }
  return total / static_cast<double>(preds.t_pred());
}

/// Fraction of samples whose every future frame is on a navigable cell.
inline double ecfl(const TrajBatch& preds, const NavEnvironment& env) {
  if (preds.k() == 0) throw ShapeError("ecfl: no predictions");
  std::size_t ok = 0;
  for (std::size_t k = 0; k < preds.k(); ++k) ok += ecfl_check(env, trajectory_of(preds, k), preds.t_obs()) ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(preds.k());
}

inline constexpr double kMinHeadingStep = 1e-9;

/// Circular mean of the step headings from the last observed frame through
/// the future; 0 when no step is long enough to define a direction.
inline double mean_heading(const TrajBatch& preds, std::size_t k) {
  double s = 0.0, c = 0.0;
  bool any = false;
  for (std::size_t t = preds.t_obs(); t < preds.frames(); ++t) {
    const Vec2 d = preds.point(k, t) - preds.point(k, t - 1);
    const double len = d.norm();
    if (len < kMinHeadingStep) continue;
    s += d.y / len;
    c += d.x / len;
    any = true;
  }
  return any ? std::atan2(s, c) : 0.0;
}

/// Bin of a heading in n uniform bins over [-pi, pi); pi wraps to bin 0.
inline std::size_t heading_bin(double h, std::size_t n_bins) {
  h = std::remainder(h, 2.0 * std::numbers::pi);
  if (h >= std::numbers::pi) h -= 2.0 * std::numbers::pi;
  const double u = (h + std::numbers::pi) / (2.0 * std::numbers::pi) * static_cast<double>(n_bins);
  // Rounding can push headings just below pi onto the upper edge.
  return std::min(static_cast<std::size_t>(std::max(0.0, std::floor(u))), n_bins - 1);
}

/// Entropy (bits) of the histogram of per-sample mean headings.
inline double mve(const TrajBatch& preds, std::size_t n_bins = 36) {
  if (preds.k() == 0) throw ShapeError("mve: no predictions");
  if (n_bins == 0) throw Error("mve: n_bins must be positive");
  std::vector<std::size_t> counts(n_bins, 0);
  for (std::size_t k = 0; k < preds.k(); ++k) ++counts[heading_bin(mean_heading(preds, k), n_bins)];
  // -sum p log2 p rewritten as log2 K - sum c log2 c / K, which is exact for
  // the uniform and single-bin cases.
  double s = 0.0;
  for (auto c : counts)
    if (c > 1) s += static_cast<double>(c) * std::log2(static_cast<double>(c));
  const double K = static_cast<double>(preds.k());
  return std::max(0.0, std::log2(K) - s / K);
}

/// Fraction of (agent, mode) pairs that stay at least `threshold` meters away
/// from every mode of every other agent at every future frame.
inline double acfl(std::span<const TrajBatch> agents, double threshold) {
  if (agents.size() < 2) throw ShapeError("acfl: need at least two agents");
  for (const auto& a : agents)
    if (!a.same_shape(agents.front())) throw ShapeError("acfl: agents differ in K or horizon");
  const auto& ref = agents.front();
  std::size_t free = 0;
  for (std::size_t a = 0; a < agents.size(); ++a)
    for (std::size_t k = 0; k < ref.k(); ++k) {
      bool ok = true;
      for (std::size_t b = 0; b < agents.size() && ok; ++b) {
        if (b == a) continue;
        for (std::size_t kk = 0; kk < ref.k() && ok; ++kk)
          for (std::size_t t = ref.t_obs(); t < ref.frames() && ok; ++t)
            ok = (agents[a].point(k, t) - agents[b].point(kk, t)).norm() >= threshold;
      }
      free += ok ? 1 : 0;
    }
  return static_cast<double>(free) / static_cast<double>(agents.size() * ref.k());
}

struct MetricsReport {
  double ade = 0.0;
  double fde = 0.0;
  std::optional<double> kde_nll;  ///< absent when K < 2
  double ecfl = 0.0;
  double mve = 0.0;
  std::optional<double> acfl;  ///< only with multi-agent scenes
  std::size_t n_agents = 0;
};

}  // namespace trajdiffuse
