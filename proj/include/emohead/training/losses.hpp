#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "emohead/common/emotion.hpp"
#include "emohead/numerics/tape.hpp"
#include "emohead/numerics/tensor.hpp"
#include "emohead/renderfield/image.hpp"

namespace emohead::training {

using numerics::Tape;
using numerics::Tensor;
using numerics::Var;
using renderfield::Image;

struct LossWeights {
  double lambda_photo = 1.0;
  double lambda_cord = 1e-3;
  double lambda_shape = 1e-9;
};

nlohmann::json to_json(const LossWeights& w);
LossWeights loss_weights_from_json(const nlohmann::json& j);

struct TrainSchedule {
  std::size_t total_iters = 3000;
  double lr = 5e-3;
  std::uint64_t seed = 0;
  std::size_t rays_per_batch = 1024;

  /// First stage-2 iteration.
  std::size_t boundary() const { return total_iters / 2; }
  bool refining(std::size_t iter) const { return iter >= boundary(); }
  /// Linear decay from lr at iteration 0 to 0.1·lr at total_iters.
  double lr_at(std::size_t iter) const;
};

nlohmann::json to_json(const TrainSchedule& s);
TrainSchedule train_schedule_from_json(const nlohmann::json& j);

/// Images on the tape are (height·width)×3 tensors, rows in row-major pixel order.
Tensor image_tensor(const Image& image);
Image tensor_image(const Tensor& t, std::size_t width, std::size_t height);

/// Stand-in for an image/text embedding pair. Both embeddings are unit vectors.
class SemanticScorer {
 public:
  virtual ~SemanticScorer() = default;
  virtual std::size_t dim() const = 0;
  virtual Var image_embed(Var image, std::size_t width, std::size_t height) const = 0;
  virtual std::vector<double> tag_embed(Emotion tag) const = 0;
  std::vector<double> image_embed(const Image& image) const;
};

/// Stand-in for a 3DMM fitter: image → β̂_id (50 values).
class ShapeProbe {
 public:
  virtual ~ShapeProbe() = default;
  virtual Var estimate(Var image, std::size_t width, std::size_t height) const = 0;
  std::vector<double> estimate(const Image& image) const;
};

/// Area-weighted box resampling to grid×grid as a (grid²)×(height·width) matrix.
Tensor box_resample_matrix(std::size_t width, std::size_t height, std::size_t grid);

/// Seeded linear projection of the image box-resampled to grid×grid, normalized.
/// Tag embeddings are seeded unit vectors, one per tag.
class LinearSemanticScorer : public SemanticScorer {
 public:
  explicit LinearSemanticScorer(std::uint64_t seed = 0, std::size_t dim = 16, std::size_t grid = 8);
  std::size_t dim() const override { return dim_; }
  using SemanticScorer::image_embed;
  Var image_embed(Var image, std::size_t width, std::size_t height) const override;
  std::vector<double> tag_embed(Emotion tag) const override;

 private:
  std::size_t dim_, grid_;
  Tensor projection_;  // 3·grid² × dim
  std::vector<std::vector<double>> tags_;
};

/// Seeded linear map of the box-resampled image to 50 values.
class LinearShapeProbe : public ShapeProbe {
 public:
  explicit LinearShapeProbe(std::uint64_t seed = 0, std::size_t grid = 8);
  using ShapeProbe::estimate;
  Var estimate(Var image, std::size_t width, std::size_t height) const override;

 private:
  std::size_t grid_;
  Tensor projection_;  // 3·grid² × 50
};

// Loss terms. Each has a tape-free form and a tape form.

/// ‖I_r − I_g‖₂ over every pixel and channel.
double photometric_loss(const Image& rendered, const Image& target);
Var photometric_loss(Var rendered, const Tensor& target);

/// −E_I(I_r)ᵀ E_T(tag), in [−1, 1].
double semantic_alignment_loss(const Image& rendered, Emotion tag, const SemanticScorer& scorer);
Var semantic_alignment_loss(Var rendered, std::size_t width, std::size_t height, Emotion tag,
                            const SemanticScorer& scorer);

/// ‖β_id − β̂_id‖₂. Both vectors must have 50 entries.
double shape_loss(std::span<const double> beta_gt, std::span<const double> beta_hat);
Var shape_loss(std::span<const double> beta_gt, Var beta_hat);

struct LossParts {
  double total = 0.0;
  double photo = 0.0;
  double cord = 0.0;
  double shape = 0.0;
};

/// Stage 1: λ_photo·L_photo. Stage 2 adds λ_cord·L_cord + λ_shape·L_shape.
/// The parts are always reported; only the total is gated.
LossParts total_loss(std::size_t iter, const Image& rendered, const Image& target, Emotion tag,
                     std::span<const double> beta_gt, const LossWeights& weights, const TrainSchedule& schedule,
                     const SemanticScorer& scorer, const ShapeProbe& probe);

/// Same composition on the tape. `cord` and `shape` may be invalid in stage 1.
Var combine_losses(std::size_t iter, Var photo, Var cord, Var shape, const LossWeights& weights,
                   const TrainSchedule& schedule);

}  // namespace emohead::training
