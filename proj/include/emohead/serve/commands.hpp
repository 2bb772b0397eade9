#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "emohead/audio2exp/audio2exp.hpp"
#include "emohead/serve/config.hpp"
#include "emohead/serve/service.hpp"

namespace emohead::serve {

/// Missing inputs or other precondition failures of a command.
class CommandError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Artifact locations under ProjectPaths.
fs::path train_clip_dir(const ProjectConfig& c);
fs::path heldout_clip_dir(const ProjectConfig& c);
fs::path audio2exp_checkpoint(const ProjectConfig& c);
fs::path renderer_checkpoint(const ProjectConfig& c);
fs::path renderer_log(const ProjectConfig& c);

/// Clips and ground truth ("<stem>.features" + "<stem>.gt.json") from a directory, in name order.
std::vector<audio2exp::LabeledClip> load_clip_dir(const fs::path& dir);

/// Synthetic training and held-out clips for every (tag, speaker).
void cmd_emit_clips(const ProjectConfig& c, std::ostream& out);
/// One plane per tag; prints train accuracies.
void cmd_train_planes(const ProjectConfig& c, std::ostream& out);
/// Checkpoint plus held-out RMSE against ground-truth α. Returns the RMSE.
double cmd_train_audio2exp(const ProjectConfig& c, std::ostream& out);
/// RMSE recomputed from the saved checkpoint.
double cmd_eval_audio2exp(const ProjectConfig& c, std::ostream& out);
/// Trains on the synthetic scene; writes the ground-truth views to the scene directory.
/// stop_after ends this call early (the checkpoint can be resumed).
void cmd_train_renderer(const ProjectConfig& c, bool resume, std::ostream& out,
                        std::optional<std::size_t> stop_after = std::nullopt);
void cmd_render(const ProjectConfig& c, const RenderRequest& r, const fs::path& out_path, std::ostream& out);
void cmd_sweep_dim(const ProjectConfig& c, const SweepRequest& s, const fs::path& out_dir, std::ostream& out);
/// Blocks until the server stops.
void cmd_serve(const ProjectConfig& c, const std::string& host, int port, std::ostream& out);
/// Whole pipeline on the smoke preset: clips, planes, audio2exp, renderer, one render.
void cmd_smoke(const ProjectConfig& c, std::ostream& out);

}  // namespace emohead::serve
