#include "emohead/renderfield/scene.hpp"

#include <cmath>

#include "emohead/features/clip.hpp"
#include "emohead/numerics/random.hpp"

namespace emohead::renderfield {

namespace num = emohead::numerics;

namespace {

constexpr std::uint64_t kShapeStream = 61;
constexpr double kOctantSharpness = 10.0;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Tint per octant, roughly unit length and pairwise distinct.
constexpr Vec3 kTints[8] = {{0.9, -0.3, -0.3}, {-0.3, 0.9, -0.3}, {-0.3, -0.3, 0.9}, {0.6, 0.6, -0.5},
                            {0.6, -0.5, 0.6},  {-0.5, 0.6, 0.6},  {0.7, 0.2, -0.7}, {-0.7, 0.2, 0.7}};

}  // namespace

double BlobField::density(const Vec3& x) const { return kPeakDensity * sigmoid((kRadius - norm(x)) / kSoftness); }

double BlobField::octant_weight(std::size_t octant, const Vec3& n) {
  double w = 1.0;
  for (std::size_t a = 0; a < 3; ++a) {
    const double sign = (octant >> a) & 1U ? 1.0 : -1.0;
    w *= sigmoid(kOctantSharpness * sign * n[a]);
  }
  return w;
}

Vec3 BlobField::color(const Vec3& x, const Vec3&) const {
  const double r = norm(x);
  const Vec3 n = r > 1e-12 ? (1.0 / r) * x : Vec3{0, 0, 1};
  Vec3 c{0.55 + 0.15 * n[1], 0.45 + 0.1 * n[2], 0.4 + 0.15 * n[0] * n[0]};
  for (std::size_t o = 0; o < 8; ++o) {
    const double s = 0.15 * std::tanh(alpha_[o]) * octant_weight(o, n);
    c = c + s * kTints[o];
  }
  const double width = 0.2 * (1.0 + 0.5 * std::tanh(alpha_[8]));
  const double band = std::exp(-(n[1] / width) * (n[1] / width)) * sigmoid(6.0 * n[2]);
  const double m = 0.6 * band * sigmoid(1.5 * alpha_[9]);
  const Vec3 mouth{0.75, 0.15, 0.2};
  for (std::size_t k = 0; k < 3; ++k) c[k] = (1.0 - m) * c[k] + m * mouth[k];
  return c;
}

ExpressionParams scene_alpha(Emotion tag) {
  ExpressionParams a;
  a.alpha = features::synthetic_emotion_mean(tag);
  switch (tag) {
    case Emotion::happy: a[9] = 1.0; break;
    case Emotion::sad: a[8] = -0.8; a[9] = -0.5; break;
    default: break;
  }
  return a;
}

RenderConfig scene_render_config(const SceneConfig& config) {
  RenderConfig r;
  r.width = config.width;
  r.height = config.height;
  r.t_near = config.orbit_radius - 1.2;
  r.t_far = config.orbit_radius + 1.2;
  r.seed = config.seed;
  return r;
}

SyntheticScene synth_scene(const SceneConfig& config) {
  SyntheticScene s;
  s.config = config;
  s.render = scene_render_config(config);
  const Intrinsics in =
      Intrinsics::centred(32, 32, config.focal).resized(config.width, config.height);
  const std::vector<CameraPose> poses = orbit_poses(config.poses, config.orbit_radius, config.elevation_deg, in);

  num::Rng rng(num::derive_seed(config.seed, kShapeStream));
  std::vector<double> beta(kShapeDim);
  for (double& b : beta) b = num::standard_normal(rng);
  s.beta_id.push_back(beta);

  for (Emotion tag : config.tags) {
    const ExpressionParams alpha = scene_alpha(tag);
    const BlobField blob(alpha);
    for (const CameraPose& pose : poses) {
      GroundTruthView v;
      v.pose = pose;
      v.tag = tag;
      v.alpha = alpha;
      v.image = Image(config.width, config.height);
      for (std::size_t y = 0; y < config.height; ++y) {
        for (std::size_t x = 0; x < config.width; ++x) {
          const Ray ray = generate_ray(pose, x, y, s.render.t_near, s.render.t_far);
          const Vec3 c = oracle_render_ray(blob, ray, config.oracle_quad, s.render.background);
          for (std::size_t k = 0; k < 3; ++k) v.image.at(x, y, k) = c[k];
        }
      }
      s.views.push_back(std::move(v));
    }
  }
  return s;
}

}  // namespace emohead::renderfield
