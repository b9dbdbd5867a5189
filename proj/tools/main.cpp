// trajdiffuse command-line tool. Exit status: 0 on success, 2 on a usage
// error, 1 on any runtime failure.

#include <cstdlib>
#include <iostream>

#include <CLI11/CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"

namespace cli = trajdiffuse::cli;

namespace {

void setup_logging(const std::string& flag) {
  std::string level = flag;
  if (level.empty()) {
    const char* env = std::getenv("TRAJDIFFUSE_LOG");
    level = env && *env ? env : "info";
  }
  const auto parsed = spdlog::level::from_str(level);
  // from_str maps unknown names to "off"; only accept that when asked for.
  if (parsed == spdlog::level::off && level != "off")
    throw cli::UsageError("unknown log level '" + level + "' (trace|debug|info|warn|error|critical|off)");
  auto logger = spdlog::stderr_color_mt("trajdiffuse");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(parsed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Intent-conditioned diffusion trajectory prediction with map guidance"};
  app.require_subcommand(1);
  app.fallthrough();

  cli::GlobalOptions g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory for outputs")->capture_default_str();
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off (default: $TRAJDIFFUSE_LOG or info)");

  cli::GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset into --out-dir");
  gen_cmd->add_option("--kind", gen.kind, "corridor|rooms|maze, or a comma list cycled over scenes")
      ->capture_default_str();
  gen_cmd->add_option("--n-scenes", gen.n_scenes)->capture_default_str();
  gen_cmd->add_option("--agents-per-scene", gen.agents_per_scene)->capture_default_str();
  gen_cmd->add_option("--size", gen.size, "Map size ROWSxCOLS in pixels")->capture_default_str();
  gen_cmd->add_option("--resolution", gen.resolution, "Meters per pixel")->capture_default_str();
  gen_cmd->add_option("--k-intents", gen.k_intents, "Stored intents per agent")->capture_default_str();
  gen_cmd->add_option("--t-obs", gen.t_obs)->capture_default_str();
  gen_cmd->add_option("--t-pred", gen.t_pred)->capture_default_str();
  gen_cmd->add_option("--goal-noise", gen.goal_noise, "Intent noise sigma in meters")->capture_default_str();
  gen_cmd->add_flag("--diversify", gen.diversify, "Send intents 1..K-1 to other reachable goals");

  cli::TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train a denoiser; writes model.ckpt and loss.csv");
  train_cmd->add_option("--data", tr.data)->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--epochs", tr.epochs)->capture_default_str();
  train_cmd->add_option("--batch", tr.batch)->capture_default_str();
  train_cmd->add_option("--lr", tr.lr)->capture_default_str();
  train_cmd->add_option("--steps", tr.steps, "Diffusion steps N")->capture_default_str();
  train_cmd->add_option("--weighting", tr.weighting)->check(CLI::IsMember({"simple", "paper"}))->capture_default_str();
  train_cmd->add_option("--widths", tr.widths, "Channel width per level")->capture_default_str();
  train_cmd->add_option("--groups", tr.groups, "Group-norm groups")->capture_default_str();
  train_cmd->add_option("--embed", tr.embed, "Step-embedding size")->capture_default_str();
  train_cmd->add_option("--resume", tr.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--jobs", tr.jobs)->capture_default_str();

  cli::PredictOptions pr;
  auto* predict_cmd = app.add_subcommand("predict", "Sample K trajectories per agent; writes predictions.jsonl");
  predict_cmd->add_option("--checkpoint", pr.checkpoint)->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--data", pr.data)->required()->check(CLI::ExistingDirectory);
  predict_cmd->add_option("--k", pr.k, "Samples per agent")->capture_default_str();
  predict_cmd->add_option("--guidance", pr.guidance)->check(CLI::IsMember({"on", "off"}))->capture_default_str();
  predict_cmd->add_option("--grad-steps", pr.grad_steps, "Guidance steps per frame")->capture_default_str();
  predict_cmd->add_option("--step-scale", pr.step_scale, "Guidance step in meters (0: map resolution)")
      ->capture_default_str();
  predict_cmd->add_option("--jobs", pr.jobs)->capture_default_str();

  cli::EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions; writes metrics.json");
  eval_cmd->add_option("--predictions", ev.predictions)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ev.data)->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--mve-bins", ev.mve_bins)->capture_default_str();
  eval_cmd->add_option("--acfl-threshold", ev.acfl_threshold, "Meters")->capture_default_str();
  eval_cmd->add_option("--jobs", ev.jobs)->capture_default_str();

  cli::RenderOptions rd;
  auto* render_cmd = app.add_subcommand("render", "Draw predictions over the map as SVG");
  render_cmd->add_option("--predictions", rd.predictions)->required()->check(CLI::ExistingFile);
  render_cmd->add_option("--data", rd.data)->required()->check(CLI::ExistingDirectory);
  render_cmd->add_option("--scene", rd.scene, "Scene id (default: all scenes with predictions)");
  render_cmd->add_option("--out", rd.out, "SVG path (needs --scene)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    setup_logging(g.log_level);
    if (*gen_cmd) cli::cmd_gen_data(g, gen);
    if (*train_cmd) cli::cmd_train(g, tr);
    if (*predict_cmd) cli::cmd_predict(g, pr);
    if (*eval_cmd) cli::cmd_eval(g, ev);
    if (*render_cmd) cli::cmd_render(g, rd);
  } catch (const cli::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
