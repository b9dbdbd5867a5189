#pragma once

// Predictions file: JSON Lines, one agent per line, in dataset order:
//   {scene_id, agent_id, t_obs, guidance, samples: [[[x, y], ...], ...], ecfl: [bool, ...]}
// Every sample holds the full trajectory, observed frames included.

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajdiffuse/core.hpp"
#include "trajdiffuse/dataset.hpp"
#include "trajdiffuse/map_io.hpp"

namespace trajdiffuse {

struct AgentPrediction {
  std::string scene_id;
  std::string agent_id;
  bool guidance = false;
  TrajBatch samples;
  std::vector<bool> ecfl;

  friend bool operator==(const AgentPrediction&, const AgentPrediction&) = default;
};

inline std::string prediction_line(const AgentPrediction& p) {
  nlohmann::ordered_json j;
  j["scene_id"] = p.scene_id;
  j["agent_id"] = p.agent_id;
  j["t_obs"] = p.samples.t_obs();
  j["guidance"] = p.guidance;
  auto samples = nlohmann::json::array();
  for (std::size_t k = 0; k < p.samples.k(); ++k) samples.push_back(detail::points_json(trajectory_of(p.samples, k)));
  j["samples"] = std::move(samples);
  j["ecfl"] = p.ecfl;
  return j.dump();
}

inline void write_predictions(const std::vector<AgentPrediction>& preds, const std::filesystem::path& path) {
  std::string out;
  for (const auto& p : preds) out += prediction_line(p) + "\n";
  detail::write_file(path, out);
}

inline std::vector<AgentPrediction> read_predictions(const std::filesystem::path& path) {
  std::istringstream in(detail::read_file(path));
  std::vector<AgentPrediction> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    const std::string where = path.string() + ": line " + std::to_string(lineno);
    try {
      const auto j = nlohmann::json::parse(line);
      AgentPrediction p;
      p.scene_id = j.at("scene_id").get<std::string>();
      p.agent_id = j.at("agent_id").get<std::string>();
      p.guidance = j.at("guidance").get<bool>();
      const auto t_obs = j.at("t_obs").get<std::size_t>();
      std::vector<Trajectory> trajs;
      for (const auto& s : j.at("samples")) trajs.push_back(detail::points_from(s, where));
      if (trajs.empty()) throw FormatError(where + ": no samples");
      if (trajs.front().size() <= t_obs) throw FormatError(where + ": samples shorter than t_obs + 1");
      try {
        p.samples = batch_from(trajs, t_obs);
      } catch (const ShapeError& e) {
        throw FormatError(where + ": " + e.what());
      }
      p.ecfl = j.at("ecfl").get<std::vector<bool>>();
      if (p.ecfl.size() != trajs.size()) throw FormatError(where + ": ecfl flags do not match the sample count");
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  return out;
}

/// Ground-truth agent matching a prediction line.
inline const AgentRecord& agent_for(const Dataset& d, const AgentPrediction& p) {
  const Scene& s = d.scene(p.scene_id);
  for (const auto& a : s.agents)
    if (a.agent_id == p.agent_id) return a;
  throw Error("no agent '" + p.agent_id + "' in scene '" + p.scene_id + "'");
}

}  // namespace trajdiffuse
