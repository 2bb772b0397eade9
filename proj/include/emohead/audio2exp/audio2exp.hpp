#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "emohead/common/expression.hpp"
#include "emohead/features/clip.hpp"
#include "emohead/hyperplane/hyperplane.hpp"
#include "emohead/numerics/mlp.hpp"
#include "emohead/numerics/params.hpp"
#include "emohead/numerics/tape.hpp"
#include "emohead/numerics/tensor.hpp"

namespace emohead::audio2exp {

using numerics::Mlp;
using numerics::MlpVars;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

struct AlignmentConfig {
  std::size_t d = 512;
  std::size_t d_h = 512;
  std::size_t window = 5;  // neighbours before the current frame
  std::vector<std::size_t> ffn_hidden{512, 256, 256, 128};
  /// Replace fused attention by one self-attention block over [υ; e; γ].
  bool no_alignment = false;
};

nlohmann::json to_json(const AlignmentConfig& c);
AlignmentConfig alignment_config_from_json(const nlohmann::json& j);

struct AlignmentParams {
  AlignmentConfig config;
  Tensor e1, e2, e3;            // 768×d, 768×d, 4096×d
  Tensor wq1, wk1, wv1;         // d×d_h, d×d_h, d×d
  Tensor wq2, wk2, wv2, wv3;    // d×d_h, d×d_h, d×d, d×d
  Tensor wq, wk, wv;            // no_alignment only: 3d×d_h, 3d×d_h, 3d×3d
  Mlp ffn1, ffn2;               // 3d → hidden… → 10 and → 1

  static AlignmentParams init(const AlignmentConfig& config, std::uint64_t seed);
  numerics::ParamList parameters();
  numerics::ConstParamList parameters() const;
};

/// Current-frame outputs of one forward pass.
struct AlignmentOutput {
  Tensor h_v, h_e, h_g;  // 1×d each; in no_alignment mode h_v holds the 1×3d joint row
  ExpressionParams alpha_tilde;
  double tau = 0.0;
};

struct Projection {
  Tensor v, e, g;  // 1×d each
};

struct FusedWindow {
  Tensor s, gamma, v;  // (n+1)×d each
  Tensor e;            // projected emotion rows; S = V + E
};

struct HiddenStates {
  Tensor h_v, h_e, h_g;  // (n+1)×d; no_alignment: h_v is (n+1)×3d, others empty
};

// Tape-free forward path; pure in the parameters, safe for concurrent callers.
Projection project_features(const features::FeatureFrame& frame, const AlignmentParams& params);
FusedWindow fuse_window(const features::Window& w, const AlignmentParams& params);
HiddenStates fused_attention(const FusedWindow& fused, const AlignmentParams& params);
AlignmentOutput predict_expression(const HiddenStates& hidden, const AlignmentParams& params);
/// Window, fuse, attend and predict for frame i of a clip.
AlignmentOutput infer(const features::InputClip& clip, std::size_t i, const AlignmentParams& params);
/// α̂ for frame i: refined along the clip's emotion plane, or α̃ when `planes` is null.
ExpressionParams infer_refined(const features::InputClip& clip, std::size_t i, const AlignmentParams& params,
                               const hyperplane::PlaneSet* planes);

// Differentiable path.
struct AlignmentVars {
  const AlignmentConfig* config = nullptr;
  Var e1, e2, e3, wq1, wk1, wv1, wq2, wk2, wv2, wv3, wq, wk, wv;
  MlpVars ffn1, ffn2;
  std::vector<Var> leaves;  // same order as AlignmentParams::parameters()
};

AlignmentVars bind(Tape& tape, const AlignmentParams& params, bool trainable = true);
/// Wraps existing vars, one per entry of params.parameters(), in that order.
AlignmentVars bind(const AlignmentParams& params, std::span<const Var> leaves);

/// Raw window features stacked oldest first: (n+1)×768, (n+1)×768, (n+1)×4096.
struct WindowFeatures {
  Tensor audio, emotion, text;
};
WindowFeatures gather_window(const features::Window& w);

struct FusedVars {
  Var s, gamma, v, e;
};
struct HiddenVars {
  Var h_v, h_e, h_g;
  Var joint;  // set instead of the three above in no_alignment mode
};
struct OutputVars {
  Var alpha_tilde;  // rows×10
  Var tau;          // rows×1
};

FusedVars fuse_window(const AlignmentVars& p, Var audio, Var emotion, Var text);
HiddenVars fused_attention(const AlignmentVars& p, const FusedVars& fused);
HiddenVars joint_attention(const AlignmentVars& p, const FusedVars& fused);
/// Last row of each hidden state, concatenated: 1×3d.
Var readout(const HiddenVars& hidden);
/// Both heads over every row of `rows` (k×3d).
OutputVars predict_expression(const AlignmentVars& p, Var rows);

/// ‖α_A − α̂‖ + ρ‖α_Ā − α̂‖ with Euclidean (not squared) norms.
double contrastive_loss(const ExpressionParams& alpha_hat, const ExpressionParams& alpha_a,
                        const ExpressionParams& alpha_abar, double rho);
/// Batch form: mean over rows of the per-row loss. alpha_abar may be invalid
/// for plain regression.
Var contrastive_loss(Var alpha_hat, Var alpha_a, Var alpha_abar, double rho);

struct Audio2ExpConfig {
  AlignmentConfig model;
  double rho = 0.5;
  double lr = 5e-4;
  std::size_t iterations = 20000;
  std::size_t batch = 16;
  std::uint64_t seed = 0;
  /// Plain regression: drop the partner term entirely.
  bool regression_only = false;
  /// Train on α̃ + τ·w_z (true) or on α̃ alone.
  bool use_refinement = true;
  /// Tags with a single speaker: false → ConfigError; true → ρ forced to 0 with a warning.
  bool allow_single_speaker = false;
};

nlohmann::json to_json(const Audio2ExpConfig& c);
Audio2ExpConfig audio2exp_config_from_json(const nlohmann::json& j);

using LabeledClip = features::SyntheticClip;

struct Audio2ExpResult {
  AlignmentParams params;
  std::vector<double> losses;  // one per iteration
};

using StepCallback = std::function<void(std::size_t iteration, double loss)>;

Audio2ExpResult train_audio2exp(const std::vector<LabeledClip>& dataset, const hyperplane::PlaneSet& planes,
                                const Audio2ExpConfig& config, const StepCallback& on_step = {});

/// RMSE over every frame and coordinate between α̂ and ground truth.
double expression_rmse(const std::vector<LabeledClip>& clips, const AlignmentParams& params,
                       const hyperplane::PlaneSet* planes);

void save_alignment(const std::filesystem::path& path, const AlignmentParams& params,
                    const nlohmann::json& extra_meta = nlohmann::json::object());
AlignmentParams load_alignment(const std::filesystem::path& path);
std::string encode_alignment(const AlignmentParams& params, const nlohmann::json& extra_meta = nlohmann::json::object());

}  // namespace emohead::audio2exp
