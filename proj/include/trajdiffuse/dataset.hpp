#pragma once

// Dataset directory layout:
//   dataset.json                 {t_obs, t_pred, dt, scenes: [scene ids]}
//   <scene id>/map.pgm, map.json  navigability map and its sidecar
//   agents.jsonl                 one agent per line:
//     {scene_id, agent_id, frames: [[x, y], ...],
//      intents: [{frames: [...], values: [[x, y], ...]}, ...]}
// Frame indices are 0-based. Intent entries list the waypoint and goal
// frames only; the observed history is implied by `frames`.

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trajdiffuse/map_io.hpp"
#include "trajdiffuse/synth.hpp"

namespace trajdiffuse {

struct AgentRecord {
  std::string agent_id;
  Trajectory trajectory;
  std::vector<ConditionSpec> intents;

  friend bool operator==(const AgentRecord&, const AgentRecord&) = default;
};

struct Scene {
  std::string scene_id;
  NavEnvironment env;
  std::vector<AgentRecord> agents;

  friend bool operator==(const Scene&, const Scene&) = default;
};

struct Dataset {
  std::size_t t_obs = 8;
  std::size_t t_pred = 12;
  double dt = 0.4;
  std::vector<Scene> scenes;

  std::size_t frames() const { return t_obs + t_pred; }
  std::size_t agent_count() const {
    std::size_t n = 0;
    for (const auto& s : scenes) n += s.agents.size();
    return n;
  }
  const Scene& scene(const std::string& id) const {
    for (const auto& s : scenes)
      if (s.scene_id == id) return s;
    throw Error("no scene '" + id + "' in dataset");
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline std::string scene_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04zu", i);
  return buf;
}

namespace detail {

inline nlohmann::json points_json(std::span<const Vec2> pts) {
  auto a = nlohmann::json::array();
  for (const auto& p : pts) a.push_back({p.x, p.y});
  return a;
}

inline std::vector<Vec2> points_from(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array()) throw FormatError(where + ": expected an array of [x, y] pairs");
  std::vector<Vec2> out;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      throw FormatError(where + ": expected [x, y] number pairs");
    out.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return out;
}

}  // namespace detail

inline std::string agent_line(const std::string& scene_id, const AgentRecord& a, std::size_t t_obs) {
  nlohmann::ordered_json j;
  j["scene_id"] = scene_id;
  j["agent_id"] = a.agent_id;
  j["frames"] = detail::points_json(a.trajectory);
  auto intents = nlohmann::json::array();
  for (const auto& c : a.intents) {
    nlohmann::ordered_json ij;
    ij["frames"] = std::vector<std::size_t>(c.frames.begin() + static_cast<std::ptrdiff_t>(t_obs), c.frames.end());
    ij["values"] = detail::points_json(std::span(c.values).subspan(t_obs));
    intents.push_back(nlohmann::json(std::move(ij)));
  }
  j["intents"] = std::move(intents);
  return j.dump();
}

inline void write_dataset(const Dataset& d, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::ordered_json meta;
  meta["t_obs"] = d.t_obs;
  meta["t_pred"] = d.t_pred;
  meta["dt"] = d.dt;
  auto ids = nlohmann::json::array();
  std::string agents;
  for (const auto& s : d.scenes) {
    ids.push_back(s.scene_id);
    fs::create_directories(dir / s.scene_id);
    write_map(s.env, dir / s.scene_id / "map.pgm");
    for (const auto& a : s.agents) agents += agent_line(s.scene_id, a, d.t_obs) + "\n";
  }
  meta["scenes"] = std::move(ids);
  detail::write_file(dir / "dataset.json", meta.dump(2) + "\n");
  detail::write_file(dir / "agents.jsonl", agents);
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  const auto meta_path = dir / "dataset.json";
  if (!std::filesystem::exists(meta_path)) throw FormatError(dir.string() + ": missing dataset.json");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(detail::read_file(meta_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(meta_path.string() + ": byte " + std::to_string(e.byte) + ": invalid JSON");
  }
  Dataset d;
  try {
    d.t_obs = meta.at("t_obs").get<std::size_t>();
    d.t_pred = meta.at("t_pred").get<std::size_t>();
    d.dt = meta.at("dt").get<double>();
    for (const auto& id : meta.at("scenes")) {
      Scene s;
      s.scene_id = id.get<std::string>();
      d.scenes.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(meta_path.string() + ": " + e.what());
  }
  if (d.t_obs == 0 || d.t_pred == 0) throw FormatError(meta_path.string() + ": t_obs and t_pred must be positive");
  for (auto& s : d.scenes) s.env = read_map(dir / s.scene_id / "map.pgm");

  const auto agents_path = dir / "agents.jsonl";
  std::istringstream in(detail::read_file(agents_path));
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    const std::string where = agents_path.string() + ": line " + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(where + ", column " + std::to_string(e.byte) + ": invalid JSON");
    }
    try {
      const std::string sid = j.at("scene_id").get<std::string>();
      auto it = std::find_if(d.scenes.begin(), d.scenes.end(), [&](const Scene& s) { return s.scene_id == sid; });
      if (it == d.scenes.end()) throw FormatError(where + ": unknown scene '" + sid + "'");
      AgentRecord a;
      a.agent_id = j.at("agent_id").get<std::string>();
      a.trajectory = detail::points_from(j.at("frames"), where);
      if (a.trajectory.size() != d.frames())
        throw FormatError(where + ": expected " + std::to_string(d.frames()) + " frames, got " +
                          std::to_string(a.trajectory.size()));
      for (const auto& ij : j.at("intents")) {
        ConditionSpec c;
        for (std::size_t t = 0; t < d.t_obs; ++t) {
          c.frames.push_back(t);
          c.values.push_back(a.trajectory[t]);
        }
        for (const auto& f : ij.at("frames")) c.frames.push_back(f.get<std::size_t>());
        for (const auto& p : detail::points_from(ij.at("values"), where)) c.values.push_back(p);
        if (c.frames.size() <= d.t_obs) throw FormatError(where + ": intent without a goal");
        c.n_waypoints = c.frames.size() - d.t_obs - 1;
        try {
          c.validate(d.t_obs, d.t_pred);
        } catch (const ShapeError& e) {
          throw FormatError(where + ": " + e.what());
        }
        a.intents.push_back(std::move(c));
      }
      it->agents.push_back(std::move(a));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  return d;
}

struct GenerationConfig {
  std::vector<EnvKind> kinds{EnvKind::corridor};  ///< cycled over scenes
  std::size_t n_scenes = 4;
  std::size_t agents_per_scene = 4;
  std::size_t rows = 32, cols = 32;
  double resolution = 0.5;
  std::size_t t_obs = 8, t_pred = 12;
  TrajectoryConfig motion{};
  std::size_t k_intents = 20;
  IntentOracleConfig intent{};
  std::uint64_t seed = 0;
};

/// Every scene and agent is a pure function of (config, seed).
inline Dataset generate_dataset(const GenerationConfig& cfg) {
  if (cfg.kinds.empty()) throw Error("generate_dataset: no environment kinds");
  Dataset d;
  d.t_obs = cfg.t_obs;
  d.t_pred = cfg.t_pred;
  d.dt = cfg.motion.dt;
  TrajectoryConfig motion = cfg.motion;
  motion.frames = cfg.t_obs + cfg.t_pred;
  for (std::size_t s = 0; s < cfg.n_scenes; ++s) {
    const std::uint64_t scene_seed = derive_seed(cfg.seed, s);
    Scene sc;
    sc.scene_id = scene_name(s);
    sc.env = generate_environment(cfg.kinds[s % cfg.kinds.size()], cfg.rows, cfg.cols, cfg.resolution, scene_seed);
    for (std::size_t a = 0; a < cfg.agents_per_scene; ++a) {
      AgentRecord rec;
      rec.agent_id = "agent_" + std::to_string(a);
      rec.trajectory = generate_trajectory(sc.env, motion, derive_seed(scene_seed, 2 * a + 1));
      rec.intents = intent_oracle(rec.trajectory, cfg.t_obs, cfg.intent, sc.env, cfg.k_intents,
                                  derive_seed(scene_seed, 2 * a + 2));
      sc.agents.push_back(std::move(rec));
    }
    d.scenes.push_back(std::move(sc));
  }
  return d;
}

}  // namespace trajdiffuse
