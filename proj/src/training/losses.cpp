#include "emohead/training/losses.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "emohead/numerics/errors.hpp"
#include "emohead/numerics/ops.hpp"
#include "emohead/numerics/random.hpp"

namespace emohead::training {

namespace num = emohead::numerics;
using json = nlohmann::json;

namespace {

constexpr std::size_t kShapeDim = 50;
constexpr std::uint64_t kScorerStream = 81;
constexpr std::uint64_t kTagStream = 82;
constexpr std::uint64_t kProbeStream = 83;

Tensor gaussian(std::size_t rows, std::size_t cols, num::Rng& rng, double scale) {
  Tensor t({rows, cols});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * num::standard_normal(rng);
  return t;
}

// Weights of source cells [s, s+1) inside target cell o of a length-n axis cut into g cells.
std::vector<std::vector<double>> box_weights(std::size_t n, std::size_t g) {
  std::vector<std::vector<double>> w(g, std::vector<double>(n, 0.0));
  const double step = static_cast<double>(n) / static_cast<double>(g);
  for (std::size_t o = 0; o < g; ++o) {
    const double lo = o * step, hi = (o + 1) * step;
    for (std::size_t s = 0; s < n; ++s) {
      const double overlap = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
      if (overlap > 0) w[o][s] = overlap / step;
    }
  }
  return w;
}

// (grid²)×3 resampled image flattened to 1×(3·grid²).
Var resampled_row(Var image, std::size_t width, std::size_t height, std::size_t grid) {
  if (image.value().rows() != width * height || image.value().cols() != 3) {
    throw DimensionError("image tensor must be " + std::to_string(width * height) + "x3");
  }
  Tape& tape = image.tape();
  const Var d = tape.constant(box_resample_matrix(width, height, grid));
  return num::reshape(num::matmul(d, image), 1, 3 * grid * grid);
}

Var eval_on_tape(const Image& image, const std::function<Var(Var)>& f, Tape& tape) {
  return f(tape.constant(image_tensor(image)));
}

std::vector<double> row_values(const Tensor& t) { return {t.data(), t.data() + t.size()}; }

}  // namespace

json to_json(const LossWeights& w) {
  return {{"lambda_photo", w.lambda_photo}, {"lambda_cord", w.lambda_cord}, {"lambda_shape", w.lambda_shape}};
}

LossWeights loss_weights_from_json(const json& j) {
  LossWeights w;
  w.lambda_photo = j.value("lambda_photo", w.lambda_photo);
  w.lambda_cord = j.value("lambda_cord", w.lambda_cord);
  w.lambda_shape = j.value("lambda_shape", w.lambda_shape);
  return w;
}

double TrainSchedule::lr_at(std::size_t iter) const {
  if (total_iters == 0) return lr;
  const double p = std::min(1.0, static_cast<double>(iter) / static_cast<double>(total_iters));
  return lr * (1.0 - 0.9 * p);
}

json to_json(const TrainSchedule& s) {
  return {{"total_iters", s.total_iters}, {"lr", s.lr}, {"seed", s.seed}, {"rays_per_batch", s.rays_per_batch}};
}

TrainSchedule train_schedule_from_json(const json& j) {
  TrainSchedule s;
  s.total_iters = j.value("total_iters", s.total_iters);
  s.lr = j.value("lr", s.lr);
  s.seed = j.value("seed", s.seed);
  s.rays_per_batch = j.value("rays_per_batch", s.rays_per_batch);
  return s;
}

Tensor image_tensor(const Image& image) { return Tensor({image.pixels(), 3}, image.rgb); }

Image tensor_image(const Tensor& t, std::size_t width, std::size_t height) {
  if (t.rows() != width * height || t.cols() != 3) throw DimensionError("tensor does not match image size");
  Image img(width, height);
  std::copy(t.data(), t.data() + t.size(), img.rgb.begin());
  return img;
}

Tensor box_resample_matrix(std::size_t width, std::size_t height, std::size_t grid) {
  if (width == 0 || height == 0 || grid == 0) throw DimensionError("box resample: empty size");
  const auto wx = box_weights(width, grid);
  const auto wy = box_weights(height, grid);
  Tensor m({grid * grid, width * height});
  for (std::size_t gy = 0; gy < grid; ++gy) {
    for (std::size_t gx = 0; gx < grid; ++gx) {
      for (std::size_t y = 0; y < height; ++y) {
        if (wy[gy][y] == 0.0) continue;
        for (std::size_t x = 0; x < width; ++x) m.at(gy * grid + gx, y * width + x) = wy[gy][y] * wx[gx][x];
      }
    }
  }
  return m;
}

std::vector<double> SemanticScorer::image_embed(const Image& image) const {
  Tape tape;
  const Var e = eval_on_tape(image, [&](Var v) { return image_embed(v, image.width, image.height); }, tape);
  return row_values(e.value());
}

std::vector<double> ShapeProbe::estimate(const Image& image) const {
  Tape tape;
  const Var e = eval_on_tape(image, [&](Var v) { return estimate(v, image.width, image.height); }, tape);
  return row_values(e.value());
}

LinearSemanticScorer::LinearSemanticScorer(std::uint64_t seed, std::size_t dim, std::size_t grid)
    : dim_(dim), grid_(grid) {
  if (dim == 0 || grid == 0) throw ConfigError("semantic scorer needs dim and grid > 0");
  num::Rng rng(num::derive_seed(seed, kScorerStream));
  projection_ = gaussian(3 * grid * grid, dim, rng, 1.0 / std::sqrt(3.0 * grid * grid));
  num::Rng tag_rng(num::derive_seed(seed, kTagStream));
  for (std::size_t t = 0; t < kAllEmotions.size(); ++t) {
    std::vector<double> v(dim);
    double n2 = 0.0;
    for (double& x : v) {
      x = num::standard_normal(tag_rng);
      n2 += x * x;
    }
    for (double& x : v) x /= std::sqrt(n2);
    tags_.push_back(std::move(v));
  }
}

Var LinearSemanticScorer::image_embed(Var image, std::size_t width, std::size_t height) const {
  const Var r = resampled_row(image, width, height, grid_);
  return num::normalize(num::matmul(r, image.tape().constant(projection_)));
}

std::vector<double> LinearSemanticScorer::tag_embed(Emotion tag) const {
  return tags_.at(static_cast<std::size_t>(emotion_index(tag)));
}

LinearShapeProbe::LinearShapeProbe(std::uint64_t seed, std::size_t grid) : grid_(grid) {
  if (grid == 0) throw ConfigError("shape probe needs grid > 0");
  num::Rng rng(num::derive_seed(seed, kProbeStream));
  projection_ = gaussian(3 * grid * grid, kShapeDim, rng, 1.0 / std::sqrt(3.0 * grid * grid));
}

Var LinearShapeProbe::estimate(Var image, std::size_t width, std::size_t height) const {
  const Var r = resampled_row(image, width, height, grid_);
  return num::matmul(r, image.tape().constant(projection_));
}

double photometric_loss(const Image& rendered, const Image& target) {
  if (rendered.width != target.width || rendered.height != target.height) {
    throw DimensionError("photometric loss: resolution mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < rendered.rgb.size(); ++i) {
    const double d = rendered.rgb[i] - target.rgb[i];
    s += d * d;
  }
  return std::sqrt(s);
}

Var photometric_loss(Var rendered, const Tensor& target) {
  if (rendered.value().shape() != target.shape()) throw DimensionError("photometric loss: resolution mismatch");
  return num::l2_norm(num::sub(rendered, rendered.tape().constant(target)));
}

double semantic_alignment_loss(const Image& rendered, Emotion tag, const SemanticScorer& scorer) {
  const std::vector<double> e = scorer.image_embed(rendered);
  const std::vector<double> t = scorer.tag_embed(tag);
  if (e.size() != t.size()) throw DimensionError("semantic alignment: embedding widths differ");
  double s = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) s += e[i] * t[i];
  return -s;
}

Var semantic_alignment_loss(Var rendered, std::size_t width, std::size_t height, Emotion tag,
                            const SemanticScorer& scorer) {
  const Var e = scorer.image_embed(rendered, width, height);
  const std::vector<double> t = scorer.tag_embed(tag);
  if (e.value().size() != t.size()) throw DimensionError("semantic alignment: embedding widths differ");
  return num::scale(num::dot(e, rendered.tape().constant(Tensor({1, t.size()}, t))), -1.0);
}

double shape_loss(std::span<const double> beta_gt, std::span<const double> beta_hat) {
  if (beta_gt.size() != kShapeDim || beta_hat.size() != kShapeDim) {
    throw DimensionError("shape loss: expected two vectors of " + std::to_string(kShapeDim));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < kShapeDim; ++i) s += (beta_gt[i] - beta_hat[i]) * (beta_gt[i] - beta_hat[i]);
  return std::sqrt(s);
}

Var shape_loss(std::span<const double> beta_gt, Var beta_hat) {
  if (beta_gt.size() != kShapeDim || beta_hat.value().size() != kShapeDim) {
    throw DimensionError("shape loss: expected two vectors of " + std::to_string(kShapeDim));
  }
  const Tensor gt({1, kShapeDim}, {beta_gt.begin(), beta_gt.end()});
  return num::l2_norm(num::sub(num::reshape(beta_hat, 1, kShapeDim), beta_hat.tape().constant(gt)));
}

LossParts total_loss(std::size_t iter, const Image& rendered, const Image& target, Emotion tag,
                     std::span<const double> beta_gt, const LossWeights& weights, const TrainSchedule& schedule,
                     const SemanticScorer& scorer, const ShapeProbe& probe) {
  LossParts p;
  p.photo = photometric_loss(rendered, target);
  p.cord = semantic_alignment_loss(rendered, tag, scorer);
  p.shape = shape_loss(beta_gt, probe.estimate(rendered));
  p.total = weights.lambda_photo * p.photo;
  if (schedule.refining(iter)) p.total += weights.lambda_cord * p.cord + weights.lambda_shape * p.shape;
  return p;
}

Var combine_losses(std::size_t iter, Var photo, Var cord, Var shape, const LossWeights& weights,
                   const TrainSchedule& schedule) {
  Var total = num::scale(photo, weights.lambda_photo);
  if (!schedule.refining(iter)) return total;
  if (cord.valid()) total = num::add(total, num::scale(cord, weights.lambda_cord));
  if (shape.valid()) total = num::add(total, num::scale(shape, weights.lambda_shape));
  return total;
}

}  // namespace emohead::training
