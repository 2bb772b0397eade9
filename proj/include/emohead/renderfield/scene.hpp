#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "emohead/common/emotion.hpp"
#include "emohead/common/expression.hpp"
#include "emohead/renderfield/camera.hpp"
#include "emohead/renderfield/image.hpp"
#include "emohead/renderfield/render.hpp"

namespace emohead::renderfield {

inline constexpr std::size_t kShapeDim = 50;

/// Analytic "emotive blob": a soft sphere whose surface colour is driven by α.
///
/// Colour depends on the outward unit direction n = x/‖x‖:
/// - dims 0..7 tint one octant each (octant bits: x>0, y>0, z>0);
/// - dim 8 sets the width of the front equatorial band ("mouth");
/// - dim 9 sets how strongly the band shows.
/// At α = 0 the blob is mirror symmetric under x → −x.
class BlobField : public AnalyticField {
 public:
  static constexpr double kRadius = 0.8;
  static constexpr double kSoftness = 0.08;
  static constexpr double kPeakDensity = 20.0;

  explicit BlobField(const ExpressionParams& alpha) : alpha_(alpha) {}

  double density(const Vec3& x) const override;
  Vec3 color(const Vec3& x, const Vec3& d) const override;
  /// Octant weight of direction n, in (0, 1); weights over all octants sum to 1.
  static double octant_weight(std::size_t octant, const Vec3& n);

 private:
  ExpressionParams alpha_;
};

struct SceneConfig {
  std::size_t width = 32;
  std::size_t height = 32;
  std::size_t poses = 8;
  double orbit_radius = 3.0;
  double elevation_deg = 15.0;
  double focal = 48.0;  // at 32 px width
  std::vector<Emotion> tags{Emotion::neutral, Emotion::happy, Emotion::sad};
  std::size_t oracle_quad = 1024;
  std::uint64_t seed = 0;
};

/// Expression used for a tag in the synthetic scene: the synthetic tag mean
/// plus a per-tag mouth setting.
ExpressionParams scene_alpha(Emotion tag);

struct GroundTruthView {
  CameraPose pose;
  Emotion tag = Emotion::neutral;
  ExpressionParams alpha;
  std::size_t identity = 0;
  Image image;
};

struct SyntheticScene {
  SceneConfig config;
  RenderConfig render;  // bounds, background and resolution of the views
  std::vector<GroundTruthView> views;
  std::vector<std::vector<double>> beta_id;  // one kShapeDim vector per identity
};

/// Render settings matched to the scene geometry.
RenderConfig scene_render_config(const SceneConfig& config);
/// Ground-truth views for every (pose, tag) pair, rendered with the oracle.
SyntheticScene synth_scene(const SceneConfig& config = {});

}  // namespace emohead::renderfield
