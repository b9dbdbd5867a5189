#pragma once

// Subcommand implementations for the trajdiffuse command-line tool. Each
// command takes fully parsed options, writes its outputs under the output
// directory and echoes the resolved flags as <command>_config.json there.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "trajdiffuse/trajdiffuse.hpp"

namespace trajdiffuse::cli {

/// Bad flag values or flag combinations; the tool exits with status 2.
class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = ".";
  std::string log_level;  ///< empty: TRAJDIFFUSE_LOG or "info"
};

struct GenDataOptions {
  std::string kind = "corridor";  ///< comma-separated list, cycled over scenes
  std::size_t n_scenes = 4;
  std::size_t agents_per_scene = 4;
  std::string size = "32x32";  ///< rows x cols
  double resolution = 0.5;
  std::size_t k_intents = 20;
  std::size_t t_obs = 8;
  std::size_t t_pred = 12;
  double goal_noise = 0.5;
  bool diversify = false;
};

struct TrainOptions {
  std::filesystem::path data;
  std::size_t epochs = 200;
  std::size_t batch = 16;
  double lr = 1e-3;
  std::size_t steps = 25;
  std::string weighting = "simple";
  std::string widths = "32,64,128";
  std::size_t groups = 8;
  std::size_t embed = 32;
  std::filesystem::path resume;
  std::size_t jobs = 1;
};

struct PredictOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::size_t k = 20;
  std::string guidance = "on";
  std::size_t grad_steps = 10;
  double step_scale = 0.0;
  std::size_t jobs = 1;
};

struct EvalOptions {
  std::filesystem::path predictions;
  std::filesystem::path data;
  std::size_t mve_bins = 36;
  double acfl_threshold = 0.5;
  std::size_t jobs = 1;
};

struct RenderOptions {
  std::filesystem::path predictions;
  std::filesystem::path data;
  std::string scene;            ///< empty: every scene with predictions
  std::filesystem::path out;    ///< only with --scene
};

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + p.string());
}

inline nlohmann::ordered_json global_json(const std::string& command, const GlobalOptions& g) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["seed"] = g.seed;
  j["out_dir"] = g.out_dir.string();
  return j;
}

inline void echo_config(const std::string& command, const GlobalOptions& g, const nlohmann::ordered_json& flags) {
  auto j = global_json(command, g);
  j["flags"] = flags;
  const auto path = g.out_dir / (command + "_config.json");
  write_text(path, j.dump(2) + "\n");
  spdlog::debug("config written to {}", path.string());
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string part; std::getline(in, part, sep);) out.push_back(part);
  return out;
}

inline std::size_t parse_count(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || s.front() == '-') throw UsageError("invalid " + what + " '" + s + "'");
  return v;
}

inline std::pair<std::size_t, std::size_t> parse_size(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw UsageError("--size must look like ROWSxCOLS, got '" + s + "'");
  const auto rows = parse_count(s.substr(0, x), "--size"), cols = parse_count(s.substr(x + 1), "--size");
  if (rows < 16 || cols < 16) throw UsageError("--size must be at least 16x16, got '" + s + "'");
  return {rows, cols};
}

inline Architecture architecture_for(const TrainOptions& o, std::size_t horizon) {
  Architecture a;
  a.horizon = horizon;
  a.n_steps = o.steps;
  a.widths.clear();
  for (const auto& w : split(o.widths, ',')) a.widths.push_back(parse_count(w, "--widths entry"));
  a.groups = o.groups;
  a.embed_dim = o.embed;
  try {
    a.validate();
  } catch (const ShapeError& e) {
    throw UsageError(std::string("model shape: ") + e.what());
  }
  return a;
}

inline std::string describe(const Architecture& a) {
  std::string w;
  for (auto v : a.widths) w += (w.empty() ? "" : ",") + std::to_string(v);
  return fmt::format("horizon {}, steps {}, widths {}, groups {}, embed {}, kernel {}, blocks {}", a.horizon,
                     a.n_steps, w, a.groups, a.embed_dim, a.kernel, a.blocks_per_level);
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline nlohmann::ordered_json report_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["ade"] = r.ade;
  j["fde"] = r.fde;
  j["kde_nll"] = r.kde_nll ? nlohmann::ordered_json(*r.kde_nll) : nlohmann::ordered_json(nullptr);
  j["ecfl"] = r.ecfl;
  j["mve"] = r.mve;
  j["acfl"] = r.acfl ? nlohmann::ordered_json(*r.acfl) : nlohmann::ordered_json(nullptr);
  j["n_agents"] = r.n_agents;
  return j;
}

}  // namespace detail

inline void cmd_gen_data(const GlobalOptions& g, const GenDataOptions& o) {
  GenerationConfig cfg;
  cfg.kinds.clear();
  for (const auto& k : detail::split(o.kind, ',')) {
    try {
      cfg.kinds.push_back(parse_env_kind(k));
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  if (cfg.kinds.empty()) throw UsageError("--kind must name at least one environment kind");
  std::tie(cfg.rows, cfg.cols) = detail::parse_size(o.size);
  if (!(o.resolution > 0.0)) throw UsageError("--resolution must be positive");
  if (o.t_obs < 1 || o.t_pred < 2) throw UsageError("need --t-obs >= 1 and --t-pred >= 2");
  if (o.k_intents < 1) throw UsageError("--k-intents must be at least 1");
  cfg.n_scenes = o.n_scenes;
  cfg.agents_per_scene = o.agents_per_scene;
  cfg.resolution = o.resolution;
  cfg.t_obs = o.t_obs;
  cfg.t_pred = o.t_pred;
  cfg.k_intents = o.k_intents;
  cfg.intent.goal_noise_sigma = o.goal_noise;
  cfg.intent.diversify = o.diversify;
  if (o.t_pred < cfg.intent.n_points) cfg.intent.n_points = 1;
  cfg.seed = g.seed;

  nlohmann::ordered_json flags;
  flags["kind"] = o.kind;
  flags["n_scenes"] = o.n_scenes;
  flags["agents_per_scene"] = o.agents_per_scene;
  flags["size"] = o.size;
  flags["resolution"] = o.resolution;
  flags["k_intents"] = o.k_intents;
  flags["t_obs"] = o.t_obs;
  flags["t_pred"] = o.t_pred;
  flags["goal_noise"] = o.goal_noise;
  flags["diversify"] = o.diversify;

  spdlog::info("generating {} scenes x {} agents ({} px at {} m)", o.n_scenes, o.agents_per_scene, o.size,
               o.resolution);
  const Dataset d = generate_dataset(cfg);
  write_dataset(d, g.out_dir);
  detail::echo_config("gen-data", g, flags);
  spdlog::info("wrote {} agents to {}", d.agent_count(), g.out_dir.string());
}

inline void cmd_train(const GlobalOptions& g, const TrainOptions& o) {
  if (o.epochs == 0 || o.batch == 0) throw UsageError("--epochs and --batch must be positive");
  if (!(o.lr >= 0.0)) throw UsageError("--lr must be non-negative");
  if (o.steps == 0) throw UsageError("--steps must be positive");
  LossWeighting weighting;
  try {
    weighting = parse_weighting(o.weighting);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const Dataset data = read_dataset(o.data);
  const Architecture arch = detail::architecture_for(o, data.frames());

  std::optional<Checkpoint> ck;
  if (!o.resume.empty()) {
    ck = load_checkpoint(o.resume);
    if (!(ck->params.arch() == arch))
      throw UsageError("checkpoint " + o.resume.string() + " does not match the flags: checkpoint has " +
                       detail::describe(ck->params.arch()) + "; flags give " + detail::describe(arch));
    spdlog::info("resuming from {}", o.resume.string());
  }
  ModelParams params = ck ? ck->params : ModelParams::initialized(arch, derive_seed(g.seed, 0));
  const NoiseSchedule schedule = ck ? ck->schedule : build_cosine_schedule(o.steps);

  TrainConfig cfg;
  cfg.n_epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.adam.lr = o.lr;
  cfg.weighting = weighting;
  cfg.seed = derive_seed(g.seed, 1);
  cfg.jobs = std::max<std::size_t>(1, o.jobs);

  nlohmann::ordered_json flags;
  flags["data"] = o.data.string();
  flags["epochs"] = o.epochs;
  flags["batch"] = o.batch;
  flags["lr"] = o.lr;
  flags["steps"] = o.steps;
  flags["weighting"] = o.weighting;
  flags["widths"] = o.widths;
  flags["groups"] = o.groups;
  flags["embed"] = o.embed;
  flags["resume"] = o.resume.string();
  flags["jobs"] = o.jobs;
  flags["parameters"] = params.values().size();
  detail::echo_config("train", g, flags);

  const auto examples = training_examples(data);
  spdlog::info("training on {} trajectories, {} parameters, {} epochs", examples.size(), params.values().size(),
               o.epochs);
  const auto log = train(examples, params, schedule, cfg, [&](std::size_t epoch, double loss) {
    if (epoch == 0 || (epoch + 1) % 10 == 0 || epoch + 1 == o.epochs)
      spdlog::info("epoch {:4d}  loss {:.6f}", epoch + 1, loss);
  });
  if (log.skipped_steps > 0) spdlog::warn("{} optimizer steps skipped on non-finite gradients", log.skipped_steps);

  std::string csv = "epoch,mean_loss\n";
  for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) csv += fmt::format("{},{:.17g}\n", e + 1, log.epoch_loss[e]);
  detail::write_text(g.out_dir / "loss.csv", csv);
  std::filesystem::create_directories(g.out_dir);
  save_checkpoint(params, schedule, g.out_dir / "model.ckpt");
  spdlog::info("checkpoint written to {}", (g.out_dir / "model.ckpt").string());
}

inline void cmd_predict(const GlobalOptions& g, const PredictOptions& o) {
  if (o.k == 0) throw UsageError("--k must be at least 1");
  if (o.guidance != "on" && o.guidance != "off") throw UsageError("--guidance must be on or off");
  SamplerOptions sopts;
  sopts.guidance.n_grad_steps = o.grad_steps;
  sopts.guidance.step_scale = o.step_scale;
  try {
    sopts.guidance.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const Dataset data = read_dataset(o.data);
  if (ck.params.arch().horizon != data.frames())
    throw Error(fmt::format("checkpoint horizon {} differs from the dataset's {} frames", ck.params.arch().horizon,
                            data.frames()));

  struct Job {
    const Scene* scene;
    const AgentRecord* agent;
  };
  std::vector<Job> jobs;
  for (const auto& s : data.scenes)
    for (const auto& a : s.agents) jobs.push_back({&s, &a});

  nlohmann::ordered_json flags;
  flags["checkpoint"] = o.checkpoint.string();
  flags["data"] = o.data.string();
  flags["k"] = o.k;
  flags["guidance"] = o.guidance;
  flags["grad_steps"] = o.grad_steps;
  flags["step_scale"] = o.step_scale;
  flags["jobs"] = o.jobs;
  detail::echo_config("predict", g, flags);

  spdlog::info("predicting {} agents x {} samples, guidance {}", jobs.size(), o.k, o.guidance);
  std::vector<AgentPrediction> out(jobs.size());
  parallel_for(jobs.size(), std::max<std::size_t>(1, o.jobs), [&](std::size_t i) {
    const auto& a = *jobs[i].agent;
    if (a.intents.empty())
      throw Error("agent " + jobs[i].scene->scene_id + "/" + a.agent_id + " has no stored intents");
    PredictionRequest req;
    req.observed.assign(a.trajectory.begin(), a.trajectory.begin() + static_cast<std::ptrdiff_t>(data.t_obs));
    req.t_pred = data.t_pred;
    for (std::size_t k = 0; k < o.k; ++k) req.intents.push_back(a.intents[k % a.intents.size()]);
    req.env = &jobs[i].scene->env;
    req.seed = derive_seed(g.seed, i);
    req.guidance_on = o.guidance == "on";
    auto r = predict(req, ck.params, ck.schedule, sopts);
    out[i] = {jobs[i].scene->scene_id, a.agent_id, req.guidance_on, std::move(r.trajectories),
              std::move(r.per_sample_ecfl)};
    spdlog::debug("predicted {}/{}", jobs[i].scene->scene_id, a.agent_id);
  });
  const auto path = g.out_dir / "predictions.jsonl";
  std::filesystem::create_directories(g.out_dir);
  write_predictions(out, path);
  spdlog::info("predictions written to {}", path.string());
}

inline EvaluationReport cmd_eval(const GlobalOptions& g, const EvalOptions& o) {
  if (o.mve_bins == 0) throw UsageError("--mve-bins must be positive");
  if (!(o.acfl_threshold >= 0.0)) throw UsageError("--acfl-threshold must be non-negative");
  const Dataset data = read_dataset(o.data);
  const auto preds = read_predictions(o.predictions);
  EvalConfig cfg{o.mve_bins, o.acfl_threshold, std::max<std::size_t>(1, o.jobs)};
  const auto report = evaluate(data, preds, cfg);

  nlohmann::ordered_json flags;
  flags["predictions"] = o.predictions.string();
  flags["data"] = o.data.string();
  flags["mve_bins"] = o.mve_bins;
  flags["acfl_threshold"] = o.acfl_threshold;
  flags["jobs"] = o.jobs;
  detail::echo_config("eval", g, flags);

  auto j = detail::global_json("eval", g);
  j["flags"] = flags;
  j["metrics"] = detail::report_json(report.overall);
  auto scenes = nlohmann::ordered_json::array();
  for (const auto& s : report.scenes) {
    auto sj = detail::report_json(s.metrics);
    sj["scene_id"] = s.scene_id;
    scenes.push_back(sj);
  }
  j["scenes"] = scenes;
  detail::write_text(g.out_dir / "metrics.json", j.dump(2) + "\n");
  const auto& r = report.overall;
  spdlog::info("ADE {:.4f}  FDE {:.4f}  ECFL {:.4f}  MVE {:.4f}  agents {}", r.ade, r.fde, r.ecfl, r.mve, r.n_agents);
  return report;
}

/// SVG of one scene at 10 px per map cell: blocked cells filled, ground
/// truth dashed, one polyline per predicted sample.
inline std::string render_scene_svg(const Scene& scene, const std::vector<const AgentPrediction*>& preds) {
  constexpr double kCell = 10.0;
  const auto& env = scene.env;
  const double W = kCell * static_cast<double>(env.cols()), H = kCell * static_cast<double>(env.rows());
  auto pt = [&](Vec2 p) {
    const Vec2 u = env.to_pixel(p);
    return fmt::format("{:.2f},{:.2f}", (u.x + 0.5) * kCell, (u.y + 0.5) * kCell);
  };
  auto polyline = [&](std::span<const Vec2> pts, const char* cls) {
    std::string s = fmt::format("<polyline class=\"{}\" points=\"", cls);
    for (std::size_t i = 0; i < pts.size(); ++i) s += (i ? " " : "") + pt(pts[i]);
    return s + "\"/>\n";
  };

  std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n",
                     W, H);
  svg += fmt::format("<title>{}</title>\n", detail::xml_escape(scene.scene_id));
  svg += "<style>.truth{fill:none;stroke:#1f5fbf;stroke-width:2;stroke-dasharray:6 4}"
         ".prediction{fill:none;stroke:#d95f02;stroke-width:1;stroke-opacity:0.6}</style>\n";
  svg += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n", W, H);
  svg += "<g fill=\"#3a3a3a\">\n";
  // Runs of blocked cells per row keep the file small.
  for (std::size_t r = 0; r < env.rows(); ++r)
    for (std::size_t c = 0; c < env.cols();) {
      if (env.navigable({r, c})) {
        ++c;
        continue;
      }
      std::size_t e = c;
      while (e < env.cols() && !env.navigable({r, e})) ++e;
      svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\"/>\n", kCell * static_cast<double>(c),
                         kCell * static_cast<double>(r), kCell * static_cast<double>(e - c), kCell);
      c = e;
    }
  svg += "</g>\n";
  for (const auto* p : preds) {
    svg += fmt::format("<g id=\"{}\">\n", detail::xml_escape(p->agent_id));
    for (const auto& a : scene.agents)
      if (a.agent_id == p->agent_id) svg += polyline(a.trajectory, "truth");
    for (std::size_t k = 0; k < p->samples.k(); ++k) {
      const auto t = trajectory_of(p->samples, k);
      svg += polyline(t, "prediction");
    }
    svg += "</g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

inline void cmd_render(const GlobalOptions& g, const RenderOptions& o) {
  if (!o.out.empty() && o.scene.empty()) throw UsageError("--out needs --scene");
  const Dataset data = read_dataset(o.data);
  const auto preds = read_predictions(o.predictions);
  std::vector<std::string> scenes;
  if (!o.scene.empty()) {
    data.scene(o.scene);
    scenes.push_back(o.scene);
  } else {
    for (const auto& s : data.scenes)
      for (const auto& p : preds)
        if (p.scene_id == s.scene_id) {
          scenes.push_back(s.scene_id);
          break;
        }
  }
  nlohmann::ordered_json flags;
  flags["predictions"] = o.predictions.string();
  flags["data"] = o.data.string();
  flags["scene"] = o.scene;
  flags["out"] = o.out.string();
  detail::echo_config("render", g, flags);

  for (const auto& id : scenes) {
    std::vector<const AgentPrediction*> mine;
    for (const auto& p : preds)
      if (p.scene_id == id) {
        agent_for(data, p);
        mine.push_back(&p);
      }
    const auto path = o.out.empty() ? g.out_dir / (id + ".svg") : o.out;
    detail::write_text(path, render_scene_svg(data.scene(id), mine));
    spdlog::info("wrote {}", path.string());
  }
}

}  // namespace trajdiffuse::cli
