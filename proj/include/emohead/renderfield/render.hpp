#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "emohead/renderfield/camera.hpp"
#include "emohead/renderfield/field.hpp"
#include "emohead/renderfield/image.hpp"

namespace emohead::renderfield {

struct RenderConfig {
  std::size_t samples = 64;  // N, at least 2
  bool stratified = false;   // seeded jitter inside each stratum; otherwise stratum midpoints
  Vec3 background{0, 0, 0};
  std::size_t width = 32;
  std::size_t height = 32;
  double t_near = 1.8;
  double t_far = 4.2;
  std::uint64_t seed = 0;
  std::size_t threads = 1;  // render_frame only; output does not depend on it

  void validate() const;
};

nlohmann::json to_json(const RenderConfig& c);
RenderConfig render_config_from_json(const nlohmann::json& j);

/// Anything that yields density and colour at points along a ray.
class Field {
 public:
  virtual ~Field() = default;
  virtual void eval_ray(const Ray& ray, std::span<const double> ts, std::span<double> sigma,
                        std::span<Vec3> rgb) const = 0;
};

/// Closed-form field for oracles and synthetic scenes.
class AnalyticField : public Field {
 public:
  virtual double density(const Vec3& x) const = 0;
  virtual Vec3 color(const Vec3& x, const Vec3& d) const = 0;
  void eval_ray(const Ray& ray, std::span<const double> ts, std::span<double> sigma,
                std::span<Vec3> rgb) const override;
};

/// Learned field bound to one conditioning vector (α̂, or [z; α̃]).
class NeuralField : public Field {
 public:
  NeuralField(const RadianceField& params, std::span<const double> cond);
  void eval_ray(const Ray& ray, std::span<const double> ts, std::span<double> sigma,
                std::span<Vec3> rgb) const override;

 private:
  const RadianceField& params_;
  Tensor cond_row_;
};

/// Sample depths t_1..t_N: stratum midpoints, or jittered by `seed` when
/// stratified. Each sample stands for its stratum, so δ_i is the stratum width
/// (t_f − t_n)/N and Σδ_i = t_f − t_n exactly.
std::vector<double> sample_depths(const Ray& ray, const RenderConfig& cfg, std::uint64_t seed);
double stratum_width(const Ray& ray, const RenderConfig& cfg);

struct Composite {
  Vec3 rgb{};
  std::vector<double> weights;        // T_i a_i
  std::vector<double> transmittance;  // T_1..T_{N+1}
};

/// Alpha compositing: a_i = 1 − exp(−σ_i δ_i), T_{i+1} = T_i (1 − a_i),
/// C = Σ T_i a_i c_i + T_{N+1}·background.
Composite composite(std::span<const double> sigma, std::span<const Vec3> rgb, std::span<const double> deltas,
                    const Vec3& background);

Vec3 render_ray(const Field& field, const Ray& ray, const RenderConfig& cfg, std::uint64_t ray_seed = 0);
Vec3 render_ray(const RadianceField& params, std::span<const double> alpha_hat, const Ray& ray, const RenderConfig& cfg,
                std::uint64_t ray_seed = 0);

/// Seed of pixel (u, v): derived from cfg.seed and the row-major pixel index.
std::uint64_t pixel_seed(const RenderConfig& cfg, std::size_t u, std::size_t v);

/// Renders at cfg.width × cfg.height (intrinsics rescaled from the pose's).
/// Rows are split across cfg.threads workers; output is independent of the count.
Image render_frame(const Field& field, const CameraPose& pose, const RenderConfig& cfg);
Image render_frame(const RadianceField& params, const CameraPose& pose, std::span<const double> alpha_hat,
                   const RenderConfig& cfg);

/// Reference integrator: midpoint rule with n_quad cells for
/// ∫ T(t) σ(t) c(t) dt + T(t_f)·background, T(t) = exp(−∫σ), the inner
/// integral accumulated cell by cell with a half cell for the current one.
Vec3 oracle_render_ray(const AnalyticField& field, const Ray& ray, std::size_t n_quad, const Vec3& background);

// Differentiable path.

/// Constant inputs of a ray batch: R rays × N samples, rows ray-major.
struct RaySamples {
  std::size_t rays = 0;
  std::size_t samples = 0;
  Tensor pe_x;    // RN × 6·L1
  Tensor pe_d;    // RN × 6·L2
  Tensor cond;    // RN × cond_dim
  Tensor deltas;  // R × N
};

/// `cond` has one row per ray. Seeds feed the stratified jitter, one per ray.
RaySamples sample_rays(std::span<const Ray> rays, const Tensor& cond, std::span<const std::uint64_t> seeds,
                       const FieldConfig& field, const RenderConfig& cfg);

/// Differentiable compositing of RN×1 densities and RN×3 colours into R×3.
Var volume_composite(Var sigma, Var rgb, const Tensor& deltas, const Vec3& background);

/// Field + compositing for a batch. `cond` overrides samples.cond when valid
/// (RN × cond_dim), so gradients can reach the conditioning.
Var render_rays(const FieldVars& field, const RaySamples& samples, const Vec3& background, Var cond = {});

}  // namespace emohead::renderfield
