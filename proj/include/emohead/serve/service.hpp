#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emohead/hyperplane/hyperplane.hpp"
#include "emohead/renderfield/field.hpp"
#include "emohead/renderfield/render.hpp"
#include "emohead/serve/config.hpp"
#include "emohead/training/trainer.hpp"

namespace emohead::serve {

/// Malformed request; `field` names the offending key.
class RequestError : public std::runtime_error {
 public:
  RequestError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Tag that is not a known emotion or has no trained plane.
class UnknownTagError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kMaxResolution = 256;
inline constexpr std::size_t kMaxSweepSteps = 256;

/// User-facing camera: orbit around the origin, y up.
struct OrbitCamera {
  double azimuth_deg = 0.0;
  double elevation_deg = 15.0;
  double radius = 3.0;
};

struct RenderRequest {
  Emotion emotion = Emotion::neutral;
  double tau = 0.0;
  double lambda = 0.0;
  std::optional<Emotion> second_emotion;
  OrbitCamera camera;
  std::size_t resolution = 32;
  std::optional<ExpressionParams> alpha_tilde;  // defaults to the neutral scene expression
  bool raw = false;                             // float dump instead of PNG
};

struct SweepRequest {
  std::size_t dim = 0;
  double from = -1.8;
  double to = 1.8;
  std::size_t steps = 9;
  RenderRequest base;  // expression and camera held fixed apart from α[dim]
};

/// Request parsing. Throws RequestError for bad shapes or values and
/// UnknownTagError for tag names outside the known set.
RenderRequest render_request_from_json(const nlohmann::json& j);
SweepRequest sweep_request_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RenderRequest& r);

/// Values of α[dim] in a sweep; steps = 1 gives the midpoint.
std::vector<double> sweep_values(double from, double to, std::size_t steps);

/// Pose for an orbit camera, intrinsics matched to the scene field of view.
renderfield::CameraPose orbit_pose(const OrbitCamera& cam, std::size_t resolution, const renderfield::SceneConfig& scene);

/// Read-only model state shared by every request.
class ServiceState {
 public:
  ServiceState(ProjectConfig config, renderfield::RadianceField field, training::RendererTrainConfig train,
               hyperplane::PlaneSet planes);
  /// Loads <checkpoints>/renderer.ckpt and the plane directory. The ablation
  /// mode comes from the checkpoint.
  static ServiceState load(const ProjectConfig& config);

  const ProjectConfig& config() const { return config_; }
  training::AblationMode mode() const { return train_.mode; }
  /// Tags that can be requested: those with a plane.
  std::vector<Emotion> emotions() const;

  /// Field conditioning for α̃ refined towards the requested tag(s).
  std::vector<double> conditioning(const RenderRequest& r) const;
  /// Same with α[dim] replaced by `value` after refinement.
  std::vector<double> conditioning(const RenderRequest& r, std::size_t dim, double value) const;

  renderfield::Image render(const RenderRequest& r) const;
  renderfield::Image render_conditioned(const RenderRequest& r, const std::vector<double>& cond) const;
  std::vector<renderfield::Image> sweep(const SweepRequest& s) const;
  /// PNG, or raw float dump when r.raw.
  std::string encode(const RenderRequest& r, const renderfield::Image& img) const;

 private:
  ExpressionParams refined(const RenderRequest& r) const;
  const hyperplane::EmotionHyperplane& plane(Emotion e) const;

  ProjectConfig config_;
  renderfield::RadianceField field_;
  training::RendererTrainConfig train_;
  hyperplane::PlaneSet planes_;
};

}  // namespace emohead::serve
