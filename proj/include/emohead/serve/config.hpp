#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emohead/audio2exp/audio2exp.hpp"
#include "emohead/hyperplane/hyperplane.hpp"
#include "emohead/renderfield/scene.hpp"
#include "emohead/training/trainer.hpp"

namespace emohead::serve {

namespace fs = std::filesystem;

struct ProjectPaths {
  fs::path features = "work/features";
  fs::path planes = "work/planes";
  fs::path checkpoints = "work/checkpoints";
  fs::path scenes = "work/scenes";
};

/// Synthetic clip corpus written by emit-clips.
struct ClipSetConfig {
  std::vector<Emotion> tags{Emotion::neutral, Emotion::happy, Emotion::sad};
  std::size_t speakers = 2;
  std::size_t clips_per_speaker = 2;
  std::size_t frames = 48;
  std::size_t heldout_frames = 48;
  double variation = 0.3;
};

/// Settings of service and CLI renders. samples = 0 reuses the training value.
struct ServeRenderConfig {
  std::size_t samples = 0;
  std::size_t threads = 1;
  std::size_t resolution = 32;
};

struct ProjectConfig {
  std::uint64_t seed = 0;
  training::AblationMode mode = training::AblationMode::full;
  ProjectPaths paths;
  ClipSetConfig clips;
  hyperplane::SvmConfig planes;
  audio2exp::Audio2ExpConfig audio2exp;
  renderfield::SceneConfig scene;
  training::RendererTrainConfig renderer;
  std::size_t checkpoint_every = 500;
  ServeRenderConfig render;

  /// Seed and mode propagated into the module configs.
  void sync();
};

/// Desk-scale defaults.
ProjectConfig default_project_config();
/// Small, fast configuration used by the smoke command.
ProjectConfig smoke_project_config(const fs::path& work_dir);

nlohmann::json to_json(const ProjectConfig& c);
/// Overlays `j` onto `base`. Throws ConfigError naming the first unknown key
/// (dotted path) or mistyped value.
ProjectConfig project_config_from_json(const nlohmann::json& j, const ProjectConfig& base = default_project_config());
ProjectConfig load_project_config(const fs::path& path, const ProjectConfig& base = default_project_config());

/// Dotted paths of every scalar or array leaf, e.g. "renderer.iters".
std::vector<std::string> config_keys(const ProjectConfig& c = default_project_config());
/// Applies "--key value" style overrides. Values are parsed as JSON when
/// possible and taken as strings otherwise.
ProjectConfig apply_overrides(const ProjectConfig& base, const std::map<std::string, std::string>& overrides);

/// Environment variable naming a config file.
inline constexpr const char* kConfigEnv = "EMOHEAD_CONFIG";

}  // namespace emohead::serve
