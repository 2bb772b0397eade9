#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>

#include "emohead/audio2exp/audio2exp.hpp"
#include "emohead/numerics/checkpoint.hpp"
#include "emohead/numerics/errors.hpp"
#include "emohead/numerics/ops.hpp"
#include "support/audio2exp_checks.hpp"

using namespace emohead;
using namespace emohead::audio2exp;
namespace num = emohead::numerics;
using checks::random_tensor;
using checks::reduced_config;

namespace {

std::vector<double> to_vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

features::FeatureFrame random_frame(std::uint64_t seed) {
  features::FeatureFrame f;
  f.audio = to_vec(random_tensor(1, features::kAudioDim, seed));
  f.emotion = to_vec(random_tensor(1, features::kEmotionDim, seed + 1));
  f.text = to_vec(random_tensor(1, features::kTextDim, seed + 2));
  return f;
}

features::InputClip random_clip(std::size_t n, std::uint64_t seed) {
  features::InputClip c;
  c.emotion = Emotion::happy;
  c.speaker_id = "s";
  for (std::size_t i = 0; i < n; ++i) {
    c.frames.push_back(random_frame(seed + 10 * i));
    c.frames.back().index = static_cast<std::int64_t>(i);
    c.frames.back().timestamp_ms = static_cast<std::int64_t>(i * 40);
  }
  return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Row-major triple loop oracle for x·W.
Tensor loop_matmul(const Tensor& x, const Tensor& w) {
  Tensor out({x.rows(), w.cols()});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < w.cols(); ++c) {
      long double s = 0;
      for (std::size_t k = 0; k < x.cols(); ++k) s += static_cast<long double>(x.at(r, k)) * w.at(k, c);
      out.at(r, c) = static_cast<double>(s);
    }
  }
  return out;
}

std::vector<LabeledClip> small_dataset(std::size_t frames = 24) {
  std::vector<LabeledClip> out;
  std::uint64_t seed = 100;
  for (Emotion e : {Emotion::happy, Emotion::sad}) {
    for (const char* spk : {"a", "b"}) out.push_back(features::emit_synthetic_clip(seed++, frames, e, spk));
  }
  return out;
}

hyperplane::PlaneSet planes_for(const std::vector<LabeledClip>& clips) {
  std::vector<hyperplane::LabeledExpression> samples;
  for (const auto& c : clips) {
    for (std::size_t i = 0; i < c.alpha.size(); ++i) {
      samples.push_back({c.alpha[i], c.clip.emotion, c.mar[i], c.clip.speaker_id});
    }
  }
  hyperplane::SvmConfig svm;
  svm.epochs = 200;
  return hyperplane::train_emotion_planes(samples, svm);
}

Audio2ExpConfig small_training(std::size_t iterations = 30) {
  Audio2ExpConfig c;
  c.model = reduced_config();
  c.model.ffn_hidden = {32, 16};
  c.iterations = iterations;
  c.batch = 4;
  c.lr = 1e-3;
  c.seed = 9;
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("a2e_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST(ProjectFeatures, ZeroFrameGivesZeroEmbeddings) {
  const AlignmentParams p = AlignmentParams::init(reduced_config(), 1);
  const Projection proj = project_features(features::silence_frame(), p);
  for (const Tensor* t : {&proj.v, &proj.e, &proj.g}) {
    ASSERT_EQ(t->shape(), (num::Shape{1, 8}));
    for (double v : t->values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(ProjectFeatures, SelectsRowsOfEmbeddingMatrix) {
  const AlignmentParams p = AlignmentParams::init(reduced_config(), 2);
  features::FeatureFrame f = features::silence_frame();
  f.audio[17] = 1.0;
  f.text[4000] = 1.0;
  const Projection proj = project_features(f, p);
  for (std::size_t c = 0; c < 8; ++c) {
    EXPECT_EQ(proj.v[c], p.e1.at(17, c));
    EXPECT_EQ(proj.g[c], p.e3.at(4000, c));
  }
}

TEST(ProjectFeatures, MatchesLoopOracle) {
  const AlignmentParams p = AlignmentParams::init(reduced_config(), 3);
  const features::FeatureFrame f = random_frame(40);
  const Projection proj = project_features(f, p);
  EXPECT_LT(max_abs_diff(proj.v, loop_matmul(Tensor({1, f.audio.size()}, f.audio), p.e1)), 1e-12);
  EXPECT_LT(max_abs_diff(proj.e, loop_matmul(Tensor({1, f.emotion.size()}, f.emotion), p.e2)), 1e-12);
  EXPECT_LT(max_abs_diff(proj.g, loop_matmul(Tensor({1, f.text.size()}, f.text), p.e3)), 1e-12);
}

TEST(ProjectFeatures, RejectsWrongDims) {
  const AlignmentParams p = AlignmentParams::init(reduced_config(), 3);
  features::FeatureFrame f = random_frame(1);
  f.text.pop_back();
  EXPECT_THROW(project_features(f, p), DimensionError);
}

TEST(FuseWindow, PaddedRowsAreZeroAndRealRowsMatchProjection) {
  const AlignmentParams p = AlignmentParams::init(reduced_config(), 4);
  const features::InputClip clip = random_clip(3, 50);
  const FusedWindow fw = fuse_window(features::window(clip, 0, 2), p);
  ASSERT_EQ(fw.s.rows(), 3u);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 8; ++c) {
      EXPECT_EQ(fw.s.at(r, c), 0.0);
      EXPECT_EQ(fw.gamma.at(r, c), 0.0);
    }
  }
  const Projection proj = project_features(clip.frames[0], p);
  for (std::size_t c = 0; c < 8; ++c) {
    EXPECT_NEAR(fw.v.at(2, c), proj.v[c], 1e-12);
    EXPECT_NEAR(fw.s.at(2, c), proj.v[c] + proj.e[c], 1e-12);
    EXPECT_NEAR(fw.gamma.at(2, c), proj.g[c], 1e-12);
  }
}

TEST(FuseWindow, RowsFollowWindowOrder) {
  const AlignmentParams p = AlignmentParams::init(reduced_config(), 5);
  const features::InputClip clip = random_clip(4, 60);
  const FusedWindow fw = fuse_window(features::window(clip, 3, 2), p);
  for (std::size_t r = 0; r < 3; ++r) {
    const Projection proj = project_features(clip.frames[1 + r], p);
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(fw.gamma.at(r, c), proj.g[c], 1e-12);
  }
}

TEST(FusedAttention, SingleRowWindowPassesValuesThrough) {
  AlignmentConfig cfg = reduced_config();
  cfg.window = 0;
  const AlignmentParams p = AlignmentParams::init(cfg, 6);
  const features::InputClip clip = random_clip(1, 70);
  const FusedWindow fw = fuse_window(features::window(clip, 0, 0), p);
  const HiddenStates h = fused_attention(fw, p);
  EXPECT_LT(max_abs_diff(h.h_v, num::matmul(fw.v, p.wv1)), 1e-12);
  EXPECT_LT(max_abs_diff(h.h_e, num::matmul(fw.s, p.wv2)), 1e-12);
  EXPECT_LT(max_abs_diff(h.h_g, num::matmul(fw.gamma, p.wv3)), 1e-12);
}

TEST(FusedAttention, ZeroQueriesGiveUniformWeights) {
  AlignmentParams p = AlignmentParams::init(reduced_config(), 7);
  for (Tensor* t : {&p.wq1, &p.wq2}) t->fill(0.0);
  const features::InputClip clip = random_clip(3, 80);
  const FusedWindow fw = fuse_window(features::window(clip, 2, 2), p);
  const HiddenStates h = fused_attention(fw, p);
  const Tensor values = num::matmul(fw.v, p.wv1);
  for (std::size_t c = 0; c < 8; ++c) {
    const double mean = (values.at(0, c) + values.at(1, c) + values.at(2, c)) / 3.0;
    for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(h.h_v.at(r, c), mean, 1e-12);
  }
}

TEST(FusedAttention, MatchesHandWrittenSoftmaxOracle) {
  const AlignmentParams p = AlignmentParams::init(reduced_config(), 8);
  const features::InputClip clip = random_clip(3, 90);
  const FusedWindow fw = fuse_window(features::window(clip, 2, 2), p);
  const HiddenStates h = fused_attention(fw, p);
  // Audio branch built row by row from explicit dot products.
  const Tensor qs = loop_matmul(fw.s, p.wq1), ks = loop_matmul(fw.s, p.wk1);
  const Tensor qg = loop_matmul(fw.gamma, p.wq2), kg = loop_matmul(fw.gamma, p.wk2);
  const Tensor vals = loop_matmul(fw.v, p.wv1);
  for (std::size_t i = 0; i < 3; ++i) {
    double logits[3], z = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      double a = 0.0;
      for (std::size_t k = 0; k < 8; ++k) a += qs.at(i, k) * ks.at(j, k) + qg.at(i, k) * kg.at(j, k);
      logits[j] = std::exp(a / std::sqrt(8.0));
      z += logits[j];
    }
    for (std::size_t c = 0; c < 8; ++c) {
      double h_ic = 0.0;
      for (std::size_t j = 0; j < 3; ++j) h_ic += logits[j] / z * vals.at(j, c);
      EXPECT_NEAR(h.h_v.at(i, c), h_ic, 1e-12);
    }
  }
}

TEST(FusedAttention, GradientsOfAttentionMatricesMatchFiniteDifferences) {
  const AlignmentParams p = AlignmentParams::init(reduced_config(), 9);
  const features::InputClip clip = random_clip(3, 100);
  const FusedWindow fw = fuse_window(features::window(clip, 2, 2), p);
  const Tensor r1 = random_tensor(3, 8, 11), r2 = random_tensor(3, 8, 12), r3 = random_tensor(3, 8, 13);
  const std::vector<Tensor> inputs{p.wq1, p.wk1, p.wv1, p.wq2, p.wk2, p.wv2, p.wv3};
  const auto report = num::grad_check(
      [&](Tape& tape, std::span<const Var> in) {
        AlignmentVars v;
        v.config = &p.config;
        v.wq1 = in[0], v.wk1 = in[1], v.wv1 = in[2], v.wq2 = in[3], v.wk2 = in[4], v.wv2 = in[5], v.wv3 = in[6];
        const FusedVars f{tape.constant(fw.s), tape.constant(fw.gamma), tape.constant(fw.v), tape.constant(fw.e)};
        const HiddenVars h = fused_attention(v, f);
        return num::add(num::add(num::dot(h.h_v, tape.constant(r1)), num::dot(h.h_e, tape.constant(r2))),
                        num::dot(h.h_g, tape.constant(r3)));
      },
      inputs);
  EXPECT_EQ(report.checked, 7u * 64u);
  EXPECT_LT(report.max_rel_err, 1e-4) << "input " << report.worst_input << " coord " << report.worst_coord;
}

TEST(PredictExpression, ZeroHeadsGiveZeroOutput) {
  AlignmentParams p = AlignmentParams::init(reduced_config(), 10);
  const std::vector<std::size_t> w1{24, 512, 256, 256, 128, 10}, w2{24, 512, 256, 256, 128, 1};
  p.ffn1 = Mlp::zeros(w1);
  p.ffn2 = Mlp::zeros(w2);
  const AlignmentOutput out = infer(random_clip(2, 110), 1, p);
  for (std::size_t k = 0; k < kExpressionDim; ++k) EXPECT_EQ(out.alpha_tilde[k], 0.0);
  EXPECT_EQ(out.tau, 0.0);
}

TEST(PredictExpression, LinearHeadsOnConcatenatedLastRows) {
  AlignmentConfig cfg = reduced_config();
  cfg.ffn_hidden.clear();
  const AlignmentParams p = AlignmentParams::init(cfg, 11);
  ASSERT_EQ(p.ffn1.layers(), 1u);
  const features::InputClip clip = random_clip(3, 120);
  const HiddenStates h = fused_attention(fuse_window(features::window(clip, 2, 2), p), p);
  const AlignmentOutput out = predict_expression(h, p);
  double row[24];
  for (std::size_t c = 0; c < 8; ++c) {
    row[c] = h.h_v.at(2, c);
    row[8 + c] = h.h_e.at(2, c);
    row[16 + c] = h.h_g.at(2, c);
  }
  for (std::size_t k = 0; k < kExpressionDim; ++k) {
    double a = p.ffn1.biases[0][k];
    for (std::size_t c = 0; c < 24; ++c) a += row[c] * p.ffn1.weights[0].at(c, k);
    EXPECT_NEAR(out.alpha_tilde[k], a, 1e-12);
  }
  double t = p.ffn2.biases[0][0];
  for (std::size_t c = 0; c < 24; ++c) t += row[c] * p.ffn2.weights[0].at(c, 0);
  EXPECT_NEAR(out.tau, t, 1e-12);
}

TEST(PredictExpression, JacobianWithRespectToRawAudioMatchesFiniteDifferences) {
  const AlignmentParams p = AlignmentParams::init(reduced_config(), 12);
  const checks::LossFixture fx = checks::make_loss_fixture(2, 1);
  const WindowFeatures& w = fx.windows[0];
  for (std::size_t out_k = 0; out_k <= kExpressionDim; ++out_k) {
    num::GradCheckOptions opt;
    opt.max_coords_per_input = 60;
    opt.seed = out_k;
    const auto report = num::grad_check(
        [&](Tape& tape, std::span<const Var> in) {
          const AlignmentVars v = bind(tape, p, false);
          const FusedVars f = fuse_window(v, in[0], tape.constant(w.emotion), tape.constant(w.text));
          const OutputVars o = predict_expression(v, readout(fused_attention(v, f)));
          Tensor pick({1, out_k < kExpressionDim ? kExpressionDim : 1});
          pick[out_k < kExpressionDim ? out_k : 0] = 1.0;
          return num::dot(out_k < kExpressionDim ? o.alpha_tilde : o.tau, tape.constant(pick));
        },
        {w.audio}, opt);
    EXPECT_LT(report.max_rel_err, 1e-4) << "output " << out_k;
  }
}

TEST(ModuleGradients, AllParametersMatchFiniteDifferences) {
  const auto report = checks::module_gradient_check(false, 24);
  EXPECT_LT(report.max_rel_err, 1e-4) << "input " << report.worst_input << " coord " << report.worst_coord;
  EXPECT_GT(report.checked, 20u * 10u);
}

TEST(ModuleGradients, NoAlignmentParametersMatchFiniteDifferences) {
  const auto report = checks::module_gradient_check(true, 24);
  EXPECT_LT(report.max_rel_err, 1e-4) << "input " << report.worst_input << " coord " << report.worst_coord;
}

TEST(Inference, TapeAndTapeFreePathsAgree) {
  for (bool no_align : {false, true}) {
    const AlignmentParams p = AlignmentParams::init(reduced_config(no_align), 13);
    const features::InputClip clip = random_clip(4, 130);
    for (std::size_t i = 0; i < clip.size(); ++i) {
      const AlignmentOutput ref = infer(clip, i, p);
      Tape tape;
      const AlignmentVars v = bind(tape, p, false);
      const WindowFeatures raw = gather_window(features::window(clip, i, p.config.window));
      const FusedVars f =
          fuse_window(v, tape.constant(raw.audio), tape.constant(raw.emotion), tape.constant(raw.text));
      const OutputVars o =
          predict_expression(v, readout(no_align ? joint_attention(v, f) : fused_attention(v, f)));
      for (std::size_t k = 0; k < kExpressionDim; ++k) EXPECT_NEAR(o.alpha_tilde.value()[k], ref.alpha_tilde[k], 1e-12);
      EXPECT_NEAR(o.tau.value().item(), ref.tau, 1e-12);
    }
  }
}

TEST(Inference, NoAlignmentIsResidualSelfAttention) {
  AlignmentParams p = AlignmentParams::init(reduced_config(true), 14);
  p.wv.fill(0.0);
  const features::InputClip clip = random_clip(3, 140);
  const FusedWindow fw = fuse_window(features::window(clip, 2, 2), p);
  const HiddenStates h = fused_attention(fw, p);
  ASSERT_EQ(h.h_v.shape(), (num::Shape{3, 24}));
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 8; ++c) {
      EXPECT_EQ(h.h_v.at(r, c), fw.v.at(r, c));
      EXPECT_EQ(h.h_v.at(r, 8 + c), fw.e.at(r, c));
      EXPECT_EQ(h.h_v.at(r, 16 + c), fw.gamma.at(r, c));
    }
  }
}

TEST(Inference, RefinedMovesAlongPlaneNormal) {
  const AlignmentParams p = AlignmentParams::init(reduced_config(), 15);
  const auto clips = small_dataset(8);
  const hyperplane::PlaneSet planes = planes_for(clips);
  const AlignmentOutput raw = infer(clips[0].clip, 3, p);
  const ExpressionParams refined = infer_refined(clips[0].clip, 3, p, &planes);
  const auto& normal = planes.at(Emotion::happy).normal;
  for (std::size_t k = 0; k < kExpressionDim; ++k) {
    EXPECT_NEAR(refined[k], raw.alpha_tilde[k] + raw.tau * normal[k], 1e-12);
  }
  EXPECT_EQ(infer_refined(clips[0].clip, 3, p, nullptr), raw.alpha_tilde);
  hyperplane::PlaneSet missing = planes;
  missing.erase(Emotion::happy);
  EXPECT_THROW(infer_refined(clips[0].clip, 3, p, &missing), ConfigError);
}

TEST(ContrastiveLoss, WorkedExamples) {
  ExpressionParams hat, a, abar;
  for (std::size_t k = 0; k < kExpressionDim; ++k) hat[k] = a[k] = abar[k] = 0.1 * static_cast<double>(k);
  EXPECT_EQ(contrastive_loss(hat, a, abar, 0.5), 0.0);
  a[0] += 0.6;
  a[1] += 0.8;
  abar[2] += 2.0;
  // ‖(0.6, 0.8)‖ = 1, ‖(2)‖ · 0.25 = 0.5
  EXPECT_NEAR(contrastive_loss(hat, a, abar, 0.25), 1.5, 1e-15);
  EXPECT_NEAR(contrastive_loss(hat, a, abar, 0.0), 1.0, 1e-15);
  EXPECT_THROW(contrastive_loss(hat, a, abar, -1.0), ConfigError);
}

TEST(ContrastiveLoss, BatchFormIsMeanOfRows) {
  const Tensor hat = random_tensor(5, 10, 1), a = random_tensor(5, 10, 2), abar = random_tensor(5, 10, 3);
  Tape tape;
  const double batch =
      contrastive_loss(tape.constant(hat), tape.constant(a), tape.constant(abar), 0.7).value().item();
  const double regression = contrastive_loss(tape.constant(hat), tape.constant(a), Var{}, 0.7).value().item();
  double expect = 0.0, expect_reg = 0.0;
  for (std::size_t r = 0; r < 5; ++r) {
    ExpressionParams h, x, y;
    for (std::size_t k = 0; k < 10; ++k) h[k] = hat.at(r, k), x[k] = a.at(r, k), y[k] = abar.at(r, k);
    expect += contrastive_loss(h, x, y, 0.7) / 5.0;
    expect_reg += contrastive_loss(h, x, y, 0.0) / 5.0;
  }
  EXPECT_NEAR(batch, expect, 1e-12);
  EXPECT_NEAR(regression, expect_reg, 1e-12);
}

TEST(Training, LossDecreases) {
  const auto data = small_dataset();
  const auto planes = planes_for(data);
  const Audio2ExpResult r = train_audio2exp(data, planes, small_training(150));
  ASSERT_EQ(r.losses.size(), 150u);
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < 20; ++i) head += r.losses[i], tail += r.losses[130 + i];
  EXPECT_LT(tail, 0.7 * head);
}

TEST(Training, SameSeedIsBitIdentical) {
  const auto data = small_dataset();
  const auto planes = planes_for(data);
  const Audio2ExpConfig cfg = small_training();
  const Audio2ExpResult a = train_audio2exp(data, planes, cfg);
  const Audio2ExpResult b = train_audio2exp(data, planes, cfg);
  EXPECT_EQ(a.losses, b.losses);
  EXPECT_EQ(encode_alignment(a.params), encode_alignment(b.params));
  Audio2ExpConfig other = cfg;
  other.seed = cfg.seed + 1;
  EXPECT_NE(train_audio2exp(data, planes, other).losses, a.losses);
}

TEST(Training, RhoZeroMatchesPlainRegression) {
  const auto data = small_dataset();
  const auto planes = planes_for(data);
  Audio2ExpConfig zero = small_training();
  zero.rho = 0.0;
  Audio2ExpConfig plain = small_training();
  plain.regression_only = true;
  const Audio2ExpResult a = train_audio2exp(data, planes, zero);
  const Audio2ExpResult b = train_audio2exp(data, planes, plain);
  EXPECT_EQ(a.losses, b.losses);
  EXPECT_EQ(encode_alignment(a.params), encode_alignment(b.params));
}

TEST(Training, MissingPlaneIsConfigError) {
  const auto data = small_dataset(6);
  auto planes = planes_for(data);
  planes.erase(Emotion::sad);
  EXPECT_THROW(train_audio2exp(data, planes, small_training(1)), ConfigError);
  Audio2ExpConfig no_refine = small_training(1);
  no_refine.use_refinement = false;
  EXPECT_NO_THROW(train_audio2exp(data, planes, no_refine));
}

TEST(Training, SingleSpeakerNeedsOptIn) {
  std::vector<LabeledClip> data = small_dataset(6);
  data.erase(data.begin() + 1);  // happy keeps only speaker "a"
  const auto planes = planes_for(data);
  EXPECT_THROW(train_audio2exp(data, planes, small_training(1)), ConfigError);
  Audio2ExpConfig allow = small_training(5);
  allow.allow_single_speaker = true;
  Audio2ExpConfig plain = small_training(5);
  plain.regression_only = true;
  EXPECT_EQ(train_audio2exp(data, planes, allow).losses, train_audio2exp(data, planes, plain).losses);
}

TEST(Checkpoint, RoundTripPreservesInference) {
  for (bool no_align : {false, true}) {
    const AlignmentParams p = AlignmentParams::init(reduced_config(no_align), 16);
    const auto path = temp_path(no_align ? "joint.ckpt" : "fused.ckpt");
    save_alignment(path, p);
    const AlignmentParams q = load_alignment(path);
    std::filesystem::remove(path);
    EXPECT_EQ(q.config.no_alignment, no_align);
    EXPECT_EQ(encode_alignment(q), encode_alignment(p));
    const features::InputClip clip = random_clip(3, 150);
    EXPECT_EQ(infer(clip, 2, q).alpha_tilde, infer(clip, 2, p).alpha_tilde);
  }
}

TEST(Checkpoint, RejectsForeignKind) {
  const auto path = temp_path("foreign.ckpt");
  Tensor t = Tensor::zeros(2, 2);
  num::write_bytes(path, num::encode_checkpoint({{"x", &t}}, {{"kind", "renderer"}}));
  EXPECT_THROW(load_alignment(path), LoadError);
  std::filesystem::remove(path);
}
