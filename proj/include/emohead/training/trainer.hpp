#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "emohead/numerics/adam.hpp"
#include "emohead/renderfield/field.hpp"
#include "emohead/renderfield/scene.hpp"
#include "emohead/training/losses.hpp"

namespace emohead::training {

using renderfield::RadianceField;

/// Pipeline variants. no_alignment only changes the audio-expression model;
/// no_refinement conditions the field on [z; α̃] (tag index first, 11 values).
enum class AblationMode { full, no_alignment, no_refinement };

std::string_view to_string(AblationMode m);
/// Throws ConfigError for names other than full, no_alignment, no_refinement.
AblationMode ablation_mode_from_string(std::string_view name);
std::size_t conditioning_width(AblationMode m);

/// Field conditioning of a frame: α̂ itself, or [z; α̃] for no_refinement.
std::vector<double> field_conditioning(const ExpressionParams& alpha, Emotion tag, AblationMode mode);

struct RendererTrainConfig {
  renderfield::FieldConfig field;  // cond_dim is overwritten from the mode
  std::size_t samples = 24;
  bool stratified = true;
  TrainSchedule schedule;
  LossWeights weights;
  AblationMode mode = AblationMode::full;
  std::size_t refine_resolution = 8;  // stage-2 full-image render for L_cord and L_shape
  std::uint64_t scorer_seed = 0;

  renderfield::FieldConfig effective_field() const;
};

nlohmann::json to_json(const RendererTrainConfig& c);
RendererTrainConfig renderer_train_config_from_json(const nlohmann::json& j);

struct LossRow {
  std::size_t iter = 0;
  double loss = 0.0;
  double photo = 0.0;
  double cord = 0.0;
  double shape = 0.0;
  double lr = 0.0;
};

/// CSV with header iter,loss,photo,cord,shape,lr; doubles printed round-trip exact.
std::string loss_csv(std::span<const LossRow> rows);

struct TrainOptions {
  std::filesystem::path checkpoint;  // written every checkpoint_every iterations and at the end
  std::size_t checkpoint_every = 0;
  bool resume = false;  // continue from `checkpoint`
  std::optional<std::size_t> stop_after;  // last iteration (exclusive) of this call
  std::filesystem::path log_csv;
  std::function<void(const LossRow&)> progress;
};

struct TrainResult {
  RadianceField field;
  numerics::AdamState adam;
  std::size_t next_iter = 0;
  std::vector<LossRow> log;  // rows of this call only
};

/// Ray-batched two-stage optimization over all views of the scene. Each
/// iteration draws rays_per_batch pixels uniformly over every image;
/// randomness depends only on (seed, iteration), so a resumed run matches an
/// uninterrupted one bit for bit.
TrainResult train_renderer(const renderfield::SyntheticScene& scene, const RendererTrainConfig& config,
                           const TrainOptions& options = {});
TrainResult train_renderer(const renderfield::SyntheticScene& scene, const RendererTrainConfig& config,
                           const TrainOptions& options, const SemanticScorer& scorer, const ShapeProbe& probe);

/// Stage-2 loss of one full low-resolution view, for gradient checks:
/// λ_photo·‖I_r − I_g‖ + λ_cord·L_cord + λ_shape·L_shape, with I_g the view
/// box-resampled to `resolution` and rendered without jitter.
Var refine_view_loss(const renderfield::FieldVars& field, const renderfield::SyntheticScene& scene, std::size_t view,
                     const RendererTrainConfig& config, std::size_t resolution, const SemanticScorer& scorer,
                     const ShapeProbe& probe);

/// Training checkpoint: field parameters (loadable by load_field) plus Adam
/// moments named "adam.m.<param>" / "adam.v.<param>" and the iteration count.
std::string encode_training_checkpoint(const RadianceField& field, const numerics::AdamState& adam,
                                       std::size_t next_iter, const RendererTrainConfig& config);
struct TrainingCheckpoint {
  RadianceField field;
  numerics::AdamState adam;
  std::size_t next_iter = 0;
  nlohmann::json config;
};
TrainingCheckpoint load_training_checkpoint(const std::filesystem::path& path);

/// Renders a view with midpoint samples at the scene resolution.
renderfield::Image render_view(const RadianceField& field, const renderfield::GroundTruthView& view,
                               const renderfield::SyntheticScene& scene, const RendererTrainConfig& config);
/// PSNR of every training view.
std::vector<double> training_psnr(const RadianceField& field, const renderfield::SyntheticScene& scene,
                                  const RendererTrainConfig& config);

}  // namespace emohead::training
