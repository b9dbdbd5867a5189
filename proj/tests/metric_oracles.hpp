#pragma once

// Scalar reference implementations of the evaluation metrics.

#include <cmath>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "trajdiffuse/core.hpp"

namespace trajdiffuse::testing {

inline std::pair<double, double> ade_fde(const TrajBatch& p, const Trajectory& truth) {
  double best_ade = std::numeric_limits<double>::infinity(), best_fde = best_ade;
  for (std::size_t k = 0; k < p.k(); ++k) {
    double sum = 0;
    for (std::size_t t = p.t_obs(); t < p.frames(); ++t)
      sum += std::sqrt(std::pow(p(k, t, 0) - truth[t].x, 2) + std::pow(p(k, t, 1) - truth[t].y, 2));
    best_ade = std::min(best_ade, sum / static_cast<double>(p.t_pred()));
    const std::size_t T = p.frames() - 1;
    best_fde = std::min(best_fde, std::sqrt(std::pow(p(k, T, 0) - truth[T].x, 2) + std::pow(p(k, T, 1) - truth[T].y, 2)));
  }
  return {best_ade, best_fde};
}

inline double kde_nll(const TrajBatch& p, const Trajectory& truth) {
  const double K = static_cast<double>(p.k());
  double total = 0;
  for (std::size_t t = p.t_obs(); t < p.frames(); ++t) {
    double h[2];
    for (int c = 0; c < 2; ++c) {
      double mean = 0;
      for (std::size_t k = 0; k < p.k(); ++k) mean += p(k, t, static_cast<std::size_t>(c)) / K;
      double var = 0;
      for (std::size_t k = 0; k < p.k(); ++k) var += std::pow(p(k, t, static_cast<std::size_t>(c)) - mean, 2) / (K - 1);
      h[c] = std::sqrt(var) * std::pow(K, -1.0 / 6.0);
      if (h[c] == 0) h[c] = 1e-3;
    }
    double dens = 0;
    for (std::size_t k = 0; k < p.k(); ++k) {
      const double gx = std::exp(-0.5 * std::pow((truth[t].x - p(k, t, 0)) / h[0], 2)) / (std::sqrt(2 * std::numbers::pi) * h[0]);
      const double gy = std::exp(-0.5 * std::pow((truth[t].y - p(k, t, 1)) / h[1], 2)) / (std::sqrt(2 * std::numbers::pi) * h[1]);
      dens += gx * gy / K;
    }
    total -= std::log(std::max(dens, 1e-12));
  }
  return total / static_cast<double>(p.t_pred());
}

inline double mve(const TrajBatch& p, std::size_t bins) {
  std::vector<double> count(bins, 0.0);
  for (std::size_t k = 0; k < p.k(); ++k) {
    double s = 0, c = 0;
    int n = 0;
    for (std::size_t t = p.t_obs(); t < p.frames(); ++t) {
      const double dx = p(k, t, 0) - p(k, t - 1, 0), dy = p(k, t, 1) - p(k, t - 1, 1);
      if (std::hypot(dx, dy) < 1e-9) continue;
      const double a = std::atan2(dy, dx);
      s += std::sin(a);
      c += std::cos(a);
      ++n;
    }
    const double h = n ? std::atan2(s, c) : 0.0;
    std::size_t b = 0;
    const double w = 2 * std::numbers::pi / static_cast<double>(bins);
    while (b + 1 < bins && -std::numbers::pi + static_cast<double>(b + 1) * w <= h) ++b;
    if (h >= std::numbers::pi) b = 0;
    count[b] += 1;
  }
  double e = 0;
  for (double c : count)
    if (c > 0) e -= c / static_cast<double>(p.k()) * std::log2(c / static_cast<double>(p.k()));
  return e;
}

inline std::vector<std::vector<bool>> acfl_free_flags(const std::vector<TrajBatch>& agents, double thr) {
  std::vector<std::vector<bool>> free(agents.size(), std::vector<bool>(agents[0].k(), true));
  for (std::size_t a = 0; a < agents.size(); ++a)
    for (std::size_t k = 0; k < agents[a].k(); ++k)
      for (std::size_t b = 0; b < agents.size(); ++b)
        for (std::size_t kk = 0; kk < agents[b].k(); ++kk)
          for (std::size_t t = agents[a].t_obs(); t < agents[a].frames(); ++t)
            if (a != b && std::hypot(agents[a](k, t, 0) - agents[b](kk, t, 0), agents[a](k, t, 1) - agents[b](kk, t, 1)) < thr)
              free[a][k] = false;
  return free;
}

inline double acfl(const std::vector<TrajBatch>& agents, double thr) {
  double n = 0, ok = 0;
  for (const auto& row : acfl_free_flags(agents, thr))
    for (bool f : row) {
      n += 1;
      ok += f ? 1 : 0;
    }
  return ok / n;
}

}  // namespace trajdiffuse::testing
