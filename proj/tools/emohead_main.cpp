#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "emohead/serve/commands.hpp"
#include "emohead/serve/config.hpp"

using emohead::serve::ProjectConfig;
using json = nlohmann::json;
namespace es = emohead::serve;

namespace {

struct ViewArgs {
  std::optional<std::string> emotion;
  std::optional<std::string> second_emotion;
  double tau = 0.0;
  double lambda = 0.0;
  double azimuth = 0.0;
  double elevation = 15.0;
  double radius = 3.0;
  std::optional<std::size_t> resolution;
  bool raw = false;
};

void add_view_options(CLI::App* cmd, ViewArgs& v) {
  cmd->add_option("--emotion", v.emotion, "Emotion tag");
  cmd->add_option("--tau", v.tau, "Refinement step along the plane normal");
  cmd->add_option("--lambda", v.lambda, "Blend towards --second-emotion, in [0, 1]");
  cmd->add_option("--second-emotion", v.second_emotion, "Second tag for interpolation");
  cmd->add_option("--azimuth", v.azimuth, "Camera azimuth in degrees");
  cmd->add_option("--elevation", v.elevation, "Camera elevation in degrees");
  cmd->add_option("--radius", v.radius, "Camera distance from the origin");
  cmd->add_option("--resolution", v.resolution, "Square output size (default render.resolution)");
  cmd->add_flag("--raw", v.raw, "Write raw float dumps instead of PNG");
}

json view_json(const ViewArgs& v, const ProjectConfig& c) {
  json j = {{"tau", v.tau},
            {"lambda", v.lambda},
            {"camera", {{"azimuth_deg", v.azimuth}, {"elevation_deg", v.elevation}, {"radius", v.radius}}},
            {"resolution", v.resolution.value_or(c.render.resolution)}};
  if (v.emotion) j["emotion"] = *v.emotion;
  if (v.second_emotion) j["second_emotion"] = *v.second_emotion;
  if (v.raw) j["format"] = "raw";
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotion-controllable talking-head pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "Project config JSON (overrides $" + std::string(es::kConfigEnv) + ")");

  // Every config leaf is also a flag: --renderer.iters 500, --mode no_refinement.
  std::map<std::string, std::string> overrides;
  std::map<std::string, CLI::Option*> override_opts;
  std::map<std::string, std::string> raw_values;
  for (const std::string& key : es::config_keys()) {
    override_opts[key] = app.add_option("--" + key, raw_values[key], "config " + key)->group("Config keys");
  }

  auto* emit = app.add_subcommand("emit-clips", "Write synthetic training and held-out clips");
  auto* planes = app.add_subcommand("train-planes", "Train one hyperplane per emotion tag");
  auto* a2e = app.add_subcommand("train-audio2exp", "Train the audio-expression model");
  auto* eval = app.add_subcommand("eval-audio2exp", "Held-out RMSE of the saved audio-expression model");
  auto* renderer = app.add_subcommand("train-renderer", "Train the radiance field on the synthetic scene");
  bool resume = false;
  renderer->add_flag("--resume", resume, "Continue from the saved checkpoint");
  std::optional<std::size_t> stop_after;
  renderer->add_option("--stop-after", stop_after, "Stop before this iteration (resumable)");

  auto* render = app.add_subcommand("render", "Render one frame");
  ViewArgs render_args;
  std::string render_out = "render.png";
  add_view_options(render, render_args);
  render->add_option("--out", render_out, "Output path");

  auto* sweep = app.add_subcommand("sweep-dim", "Render frames varying one expression coefficient");
  ViewArgs sweep_args;
  int dim = 0;
  double from = -1.8;
  double to = 1.8;
  std::size_t steps = 9;
  std::string sweep_out = "sweep";
  add_view_options(sweep, sweep_args);
  sweep->add_option("--dim", dim, "Coefficient index, 0..9")->required();
  sweep->add_option("--from", from, "Range start");
  sweep->add_option("--to", to, "Range end");
  sweep->add_option("--steps", steps, "Frame count");
  sweep->add_option("--out-dir", sweep_out, "Output directory");

  auto* serve = app.add_subcommand("serve", "HTTP rendering service");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port");

  auto* smoke = app.add_subcommand("smoke", "Small end-to-end run of every stage");
  std::string work_dir = "smoke_work";
  smoke->add_option("--work-dir", work_dir, "Directory for all smoke artifacts");

  auto* print = app.add_subcommand("print-config", "Print the effective config as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    for (const auto& [key, opt] : override_opts) {
      if (opt->count() > 0) overrides[key] = raw_values[key];
    }
    ProjectConfig config = smoke->parsed() ? es::smoke_project_config(work_dir) : es::default_project_config();
    std::string file = config_path;
    if (file.empty()) {
      if (const char* env = std::getenv(es::kConfigEnv)) file = env;
    }
    if (!file.empty()) config = es::load_project_config(file, config);
    config = es::apply_overrides(config, overrides);

    if (emit->parsed()) es::cmd_emit_clips(config, std::cout);
    if (planes->parsed()) es::cmd_train_planes(config, std::cout);
    if (a2e->parsed()) es::cmd_train_audio2exp(config, std::cout);
    if (eval->parsed()) es::cmd_eval_audio2exp(config, std::cout);
    if (renderer->parsed()) es::cmd_train_renderer(config, resume, std::cout, stop_after);
    if (render->parsed()) {
      es::cmd_render(config, es::render_request_from_json(view_json(render_args, config)), render_out, std::cout);
    }
    if (sweep->parsed()) {
      if (dim < 0 || dim > 9) throw es::CommandError("--dim must be in [0, 9], got " + std::to_string(dim));
      json j = view_json(sweep_args, config);
      j["dim"] = dim;
      j["from"] = from;
      j["to"] = to;
      j["steps"] = steps;
      es::cmd_sweep_dim(config, es::sweep_request_from_json(j), sweep_out, std::cout);
    }
    if (serve->parsed()) es::cmd_serve(config, host, port, std::cout);
    if (smoke->parsed()) es::cmd_smoke(config, std::cout);
    if (print->parsed()) std::cout << es::to_json(config).dump(2) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
