#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emohead/common/emotion.hpp"
#include "emohead/common/expression.hpp"

namespace emohead::hyperplane {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InterpolationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LabeledExpression {
  ExpressionParams alpha;
  Emotion emotion = Emotion::neutral;
  double mar = 0.0;
  std::string speaker_id;
};

struct EmotionHyperplane {
  Emotion emotion = Emotion::neutral;
  ExpressionVector normal{};  // unit length
  double bias = 0.0;
  double train_accuracy = 0.0;
};

struct SvmConfig {
  double lambda_reg = 1e-3;
  std::size_t epochs = 2000;
  std::uint64_t seed = 0;
  /// Value of the constant feature that carries the bias. Larger values
  /// regularize the bias less.
  double bias_feature = 1.0;
  /// Return the average of the second half of the iterates instead of the last.
  bool average = false;
  std::size_t mar_bins = 5;
  bool balance = true;
};

nlohmann::json to_json(const SvmConfig& c);
SvmConfig svm_config_from_json(const nlohmann::json& j);

/// k equal-width bins over [min mar, max mar], last bin right-closed. Returns
/// indices into `samples`. When every mar is equal all samples land in bin 0.
std::vector<std::vector<std::size_t>> mar_bins(const std::vector<LabeledExpression>& samples, std::size_t k = 5);

/// Downsamples every non-empty group, without replacement, to the size of the
/// smallest non-empty group. Output keeps group order; each group keeps its
/// original relative order.
std::vector<std::size_t> balance_groups(const std::vector<std::vector<std::size_t>>& groups, std::uint64_t seed);

/// Soft-margin linear SVM by Pegasos subgradient steps. The returned normal is
/// unit length and the bias is divided by the same factor.
EmotionHyperplane train_hyperplane(const std::vector<ExpressionVector>& positives,
                                   const std::vector<ExpressionVector>& negatives, const SvmConfig& config,
                                   Emotion emotion = Emotion::neutral);

using PlaneSet = std::map<Emotion, EmotionHyperplane>;

/// One-vs-rest plane for every tag present in `samples`. Positives and
/// negatives are MAR-balanced separately.
PlaneSet train_emotion_planes(const std::vector<LabeledExpression>& samples, const SvmConfig& config);

struct Classification {
  double score = 0.0;
  bool positive = true;
};

/// score = w·α + b; a score of exactly zero counts as positive.
Classification classify(const EmotionHyperplane& plane, const ExpressionParams& alpha);

/// α̂ = α̃ + τ·w. τ = 0 returns the input unchanged.
ExpressionParams refine(const ExpressionParams& alpha_tilde, double tau, const EmotionHyperplane& plane);
ExpressionParams refine(const ExpressionParams& alpha_tilde, double tau, const ExpressionVector& direction);

/// normalize((1−λ)·w1 + λ·w2); λ = 0 and λ = 1 return w1 and w2 verbatim.
ExpressionVector interpolate_planes(const EmotionHyperplane& p1, const EmotionHyperplane& p2, double lambda);

/// Talking-stage switch from one emotion to another: λ ramps linearly from 0
/// to 1 over `span` frames centred on `switch_frame`.
struct CrossFade {
  std::size_t switch_frame = 0;
  std::size_t span = 12;

  double lambda_at(std::size_t frame) const;
  /// λ for frames 0..n_frames−1.
  std::vector<double> schedule(std::size_t n_frames) const;
};

nlohmann::json to_json(const EmotionHyperplane& p, const SvmConfig& config);
EmotionHyperplane plane_from_json(const nlohmann::json& j);
void save_plane(const std::filesystem::path& path, const EmotionHyperplane& p, const SvmConfig& config);
EmotionHyperplane load_plane(const std::filesystem::path& path);

/// Directory layout: one "<tag>.json" per plane.
void save_planes(const std::filesystem::path& dir, const PlaneSet& planes, const SvmConfig& config);
PlaneSet load_planes(const std::filesystem::path& dir);

}  // namespace emohead::hyperplane
