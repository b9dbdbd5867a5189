#pragma once

// Dataset-level evaluation: per-agent metrics averaged over agents, ACFL per
// scene pooled over the scene's (agent, mode) pairs.

#include <string>
#include <vector>

#include "trajdiffuse/dataset.hpp"
#include "trajdiffuse/metrics.hpp"
#include "trajdiffuse/pipeline.hpp"
#include "trajdiffuse/prediction_io.hpp"

namespace trajdiffuse {

struct EvalConfig {
  std::size_t mve_bins = 36;
  double acfl_threshold = 0.5;
  std::size_t jobs = 1;
};

struct SceneReport {
  std::string scene_id;
  MetricsReport metrics;
};

struct EvaluationReport {
  MetricsReport overall;
  std::vector<SceneReport> scenes;
};

namespace detail {

/// Sums per-agent metrics; the caller divides.
inline void accumulate(MetricsReport& into, const MetricsReport& part) {
  into.ade += part.ade * static_cast<double>(part.n_agents);
  into.fde += part.fde * static_cast<double>(part.n_agents);
  into.ecfl += part.ecfl * static_cast<double>(part.n_agents);
  into.mve += part.mve * static_cast<double>(part.n_agents);
  if (part.kde_nll) into.kde_nll = into.kde_nll.value_or(0.0) + *part.kde_nll * static_cast<double>(part.n_agents);
  into.n_agents += part.n_agents;
}

inline void finish_mean(MetricsReport& r) {
  if (r.n_agents == 0) return;
  const double n = static_cast<double>(r.n_agents);
  r.ade /= n;
  r.fde /= n;
  r.ecfl /= n;
  r.mve /= n;
  if (r.kde_nll) *r.kde_nll /= n;
}

}  // namespace detail

/// Metrics for one scene. Agents must share K and horizon.
inline MetricsReport evaluate_scene(const Scene& scene, const std::vector<const AgentPrediction*>& preds,
                                    const std::vector<const AgentRecord*>& truths, const EvalConfig& cfg) {
  MetricsReport r;
  std::vector<TrajBatch> batches;
  for (std::size_t a = 0; a < preds.size(); ++a) {
    const TrajBatch& p = preds[a]->samples;
    const auto& truth = truths[a]->trajectory;
    const auto e = ade_fde(p, truth);
    MetricsReport one;
    one.ade = e.ade;
    one.fde = e.fde;
    if (p.k() >= 2) one.kde_nll = kde_nll(p, truth);
    one.ecfl = ecfl(p, scene.env);
    one.mve = mve(p, cfg.mve_bins);
    one.n_agents = 1;
    detail::accumulate(r, one);
    batches.push_back(p);
  }
  detail::finish_mean(r);
  if (batches.size() >= 2) r.acfl = acfl(batches, cfg.acfl_threshold);
  return r;
}

inline EvaluationReport evaluate(const Dataset& data, const std::vector<AgentPrediction>& preds, const EvalConfig& cfg) {
  if (preds.empty()) throw Error("evaluate: no predictions");
  // Scenes in dataset order; agents in file order within each scene.
  std::vector<std::vector<const AgentPrediction*>> by_scene(data.scenes.size());
  std::vector<std::vector<const AgentRecord*>> truth(data.scenes.size());
  for (const auto& p : preds) {
    std::size_t s = 0;
    while (s < data.scenes.size() && data.scenes[s].scene_id != p.scene_id) ++s;
    if (s == data.scenes.size()) throw Error("prediction for unknown scene '" + p.scene_id + "'");
    if (p.samples.t_obs() != data.t_obs || p.samples.frames() != data.frames())
      throw ShapeError("prediction for " + p.scene_id + "/" + p.agent_id + " does not match the dataset horizon");
    by_scene[s].push_back(&p);
    truth[s].push_back(&agent_for(data, p));
  }
  std::vector<std::size_t> used;
  for (std::size_t s = 0; s < by_scene.size(); ++s)
    if (!by_scene[s].empty()) used.push_back(s);

  EvaluationReport report;
  report.scenes.resize(used.size());
  parallel_for(used.size(), cfg.jobs, [&](std::size_t i) {
    const std::size_t s = used[i];
    report.scenes[i] = {data.scenes[s].scene_id, evaluate_scene(data.scenes[s], by_scene[s], truth[s], cfg)};
  });

  double acfl_sum = 0.0;
  std::size_t acfl_agents = 0;
  for (const auto& sr : report.scenes) {
    detail::accumulate(report.overall, sr.metrics);
    if (sr.metrics.acfl) {
      acfl_sum += *sr.metrics.acfl * static_cast<double>(sr.metrics.n_agents);
      acfl_agents += sr.metrics.n_agents;
    }
  }
  detail::finish_mean(report.overall);
  if (acfl_agents > 0) report.overall.acfl = acfl_sum / static_cast<double>(acfl_agents);
  return report;
}

}  // namespace trajdiffuse
