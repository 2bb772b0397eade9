// Acceptance run: one PASS/FAIL line per primary criterion. Exit status is
// the number of failed criteria.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "emohead/audio2exp/audio2exp.hpp"
#include "emohead/hyperplane/hyperplane.hpp"
#include "emohead/numerics/checkpoint.hpp"
#include "emohead/numerics/ops.hpp"
#include "emohead/numerics/random.hpp"
#include "emohead/renderfield/render.hpp"
#include "emohead/renderfield/scene.hpp"
#include "emohead/serve/config.hpp"
#include "emohead/training/trainer.hpp"
#include "hard_margin_oracle.hpp"
#include "support/audio2exp_checks.hpp"
#include "support/render_checks.hpp"

using namespace emohead;
namespace fs = std::filesystem;
namespace hp = emohead::hyperplane;
namespace a2e = emohead::audio2exp;
namespace num = emohead::numerics;
namespace rf = emohead::renderfield;
namespace tr = emohead::training;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
  std::fflush(stdout);
}

int run_cli(const std::string& args) {
  const std::string cmd = "'" + std::string(EMOHEAD_CLI) + "' " + args + " > /dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

fs::path work_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("emohead_accept_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string smoke_config_file(const fs::path& dir) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << serve::to_json(serve::smoke_project_config(dir / "work")).dump(2);
  return "--config '" + p.string() + "'";
}

// Criteria

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  const num::GradCheckReport attn = checks::module_gradient_check(false, 64);
  const num::GradCheckReport joint = checks::module_gradient_check(true, 64);
  const num::GradCheckReport stage2 = checks::stage2_gradient_check(tr::LossWeights{}, 0);
  const num::GradCheckReport stage2_unit = checks::stage2_gradient_check(tr::LossWeights{1.0, 1.0, 1.0}, 0);
  const double sec = seconds_since(t0);
  const double worst = std::max({attn.max_rel_err, joint.max_rel_err, stage2.max_rel_err, stage2_unit.max_rel_err});
  return {worst < 1e-4 && sec < 60.0,
          fmt("FusedAttn+FFN %.2e (%zu coords), joint %.2e, stage-2 %.2e (%zu coords), stage-2 unit weights %.2e; "
              "max %.2e < 1e-4; %.1f s < 60 s",
              attn.max_rel_err, attn.checked, joint.max_rel_err, stage2.max_rel_err, stage2.checked,
              stage2_unit.max_rel_err, worst, sec)};
}

Outcome attention_invariants() {
  num::Rng rng(2024);
  std::normal_distribution<double> nd(0.0, 5.0);
  double worst_sum = 0.0, worst_shift = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t r = 1 + num::uniform_index(rng, 8), c = 1 + num::uniform_index(rng, 8);
    num::Tensor m({r, c});
    for (double& v : m.values()) v = nd(rng);
    const num::Tensor y = num::softmax_rows(m);
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += y.at(i, j);
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    }
    // Per-row constant shifts.
    num::Tensor shifted = m;
    for (std::size_t i = 0; i < r; ++i) {
      const double k = 100.0 * nd(rng);
      for (std::size_t j = 0; j < c; ++j) shifted.at(i, j) += k;
    }
    const num::Tensor ys = num::softmax_rows(shifted);
    for (std::size_t i = 0; i < y.values().size(); ++i) worst_shift = std::max(worst_shift, std::abs(ys[i] - y[i]));
  }
  // Attention weights of the model itself on real windows.
  const a2e::AlignmentParams p = a2e::AlignmentParams::init(checks::reduced_config(), 3);
  const auto clip = features::emit_synthetic_clip(5, 12, Emotion::happy, "spk");
  double worst_model = 0.0;
  for (std::size_t f = 0; f < clip.clip.size(); ++f) {
    const a2e::FusedWindow fw = a2e::fuse_window(features::window(clip.clip, f, p.config.window), p);
    for (const auto& [x, wq, wk] : {std::tuple{&fw.s, &p.wq1, &p.wk1}, std::tuple{&fw.gamma, &p.wq2, &p.wk2}}) {
      const num::Tensor q = num::matmul(*x, *wq), kk = num::matmul(*x, *wk);
      num::Tensor scores({q.rows(), kk.rows()});
      for (std::size_t i = 0; i < q.rows(); ++i) {
        for (std::size_t j = 0; j < kk.rows(); ++j) {
          double s = 0.0;
          for (std::size_t c = 0; c < q.cols(); ++c) s += q.at(i, c) * kk.at(j, c);
          scores.at(i, j) = s / std::sqrt(static_cast<double>(q.cols()));
        }
      }
      const num::Tensor w = num::softmax_rows(scores);
      for (std::size_t i = 0; i < w.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < w.cols(); ++j) s += w.at(i, j);
        worst_model = std::max(worst_model, std::abs(s - 1.0));
      }
    }
  }
  return {worst_sum <= 1e-12 && worst_shift <= 1e-12 && worst_model <= 1e-12,
          fmt("1000 trials: max |row sum - 1| %.1e, max shift change %.1e; model attention rows %.1e (limit 1e-12)",
              worst_sum, worst_shift, worst_model)};
}

std::vector<ExpressionVector> cluster(std::mt19937_64& rng, const ExpressionVector& centre, double spread,
                                      std::size_t n) {
  std::normal_distribution<double> nd(0.0, spread);
  std::vector<ExpressionVector> out(n);
  for (auto& v : out) {
    for (std::size_t k = 0; k < kExpressionDim; ++k) v[k] = centre[k] + nd(rng);
  }
  return out;
}

Outcome hyperplane_oracle() {
  std::size_t seeds = 0, probes = 0, disagreements = 0;
  double min_accuracy = 1.0, worst_swap = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::mt19937_64 rng(seed);
    ExpressionVector c{};
    for (double& v : c) v = std::normal_distribution<double>(0.0, 0.5)(rng);
    ExpressionVector neg_c = c;
    for (double& v : neg_c) v = -v;
    const auto pos = cluster(rng, c, 0.4, 8);
    const auto neg = cluster(rng, neg_c, 0.4, 8);
    const testing_oracle::MaxMarginSolution ref = testing_oracle::hard_margin(pos, neg);
    if (!ref.found) return {false, fmt("seed %llu: brute-force reference found no separator", (unsigned long long)seed)};
    ++seeds;
    const hp::EmotionHyperplane plane = hp::train_hyperplane(pos, neg, {});
    std::size_t correct = 0;
    auto positive = [&](const ExpressionVector& x) {
      ExpressionParams a;
      a.alpha = x;
      return hp::classify(plane, a).positive;
    };
    for (const auto& v : pos) correct += positive(v);
    for (const auto& v : neg) correct += !positive(v);
    min_accuracy = std::min(min_accuracy, static_cast<double>(correct) / 16.0);
    for (const auto& v : pos) disagreements += positive(v) != (ref.score(v) > 0);
    for (const auto& v : neg) disagreements += positive(v) != (ref.score(v) > 0);
    // Probes between the clusters, outside 10% of the reference margin.
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0, used = 0; trial < 4000 && used < 500; ++trial) {
      const auto& a = pos[rng() % pos.size()];
      const auto& b = neg[rng() % neg.size()];
      const double t = u(rng);
      ExpressionVector x{};
      for (std::size_t k = 0; k < kExpressionDim; ++k) x[k] = (1 - t) * a[k] + t * b[k];
      if (std::abs(ref.score(x)) <= 0.1) continue;
      ++used;
      ++probes;
      disagreements += positive(x) != (ref.score(x) > 0);
    }
    const hp::EmotionHyperplane swapped = hp::train_hyperplane(neg, pos, {});
    for (std::size_t k = 0; k < kExpressionDim; ++k) {
      worst_swap = std::max(worst_swap, std::abs(plane.normal[k] + swapped.normal[k]));
    }
    worst_swap = std::max(worst_swap, std::abs(plane.bias + swapped.bias));
  }
  return {min_accuracy == 1.0 && disagreements == 0 && worst_swap <= 1e-6,
          fmt("%zu seeds x 16 points: min accuracy %.0f%%, %zu sign disagreements over data + %zu probes, "
              "label-swap max |(w,b) + (w',b')| %.1e (limit 1e-6)",
              seeds, 100.0 * min_accuracy, disagreements, probes, worst_swap)};
}

Outcome refinement_algebra() {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> nd;
  double worst_shift = 0.0, worst_add = 0.0;
  bool identity = true;
  for (int trial = 0; trial < 1000; ++trial) {
    hp::EmotionHyperplane p;
    double n2 = 0.0;
    for (double& v : p.normal) {
      v = nd(rng);
      n2 += v * v;
    }
    for (double& v : p.normal) v /= std::sqrt(n2);
    p.bias = nd(rng);
    ExpressionParams a;
    for (double& v : a.alpha) v = nd(rng);
    const double t1 = 2.0 * nd(rng), t2 = 2.0 * nd(rng);
    const double shift = hp::classify(p, hp::refine(a, t1, p)).score - hp::classify(p, a).score;
    worst_shift = std::max(worst_shift, std::abs(shift - t1));
    const ExpressionParams once = hp::refine(a, t1 + t2, p);
    const ExpressionParams twice = hp::refine(hp::refine(a, t1, p), t2, p);
    for (std::size_t k = 0; k < kExpressionDim; ++k) worst_add = std::max(worst_add, std::abs(once[k] - twice[k]));
    identity = identity && hp::refine(a, 0.0, p) == a;
  }
  return {worst_shift <= 1e-12 && worst_add <= 1e-12 && identity,
          fmt("1000 trials: max |score shift - tau| %.1e, max additivity error %.1e (limit 1e-12), tau=0 identity %s",
              worst_shift, worst_add, identity ? "bit-exact" : "BROKEN")};
}

Outcome volume_rendering() {
  const double constant = std::max({checks::constant_field_error(256, 0.7, {0.2, 0.5, 0.9}),
                                    checks::constant_field_error(256, 3.0, {1.0, 0.3, 0.1})});
  const double quad = std::max(checks::quadrature_error(64, 4096), checks::quadrature_error(64, 4096, {0.3, 0.6, 1.0}));
  const checks::WeightReport w = checks::compositing_weights(64);
  return {constant < 1e-3 && quad < 5e-3 && w.max_sum_error <= 1e-12 && w.transmittance_monotone,
          fmt("constant field N=256 err %.2e < 1e-3; N=64 vs N=4096 oracle %.2e < 5e-3; "
              "weights + T_N+1 sum err %.1e <= 1e-12; opaque sum err %.1e; transmittance %s",
              constant, quad, w.max_sum_error, w.max_opaque_error, w.transmittance_monotone ? "monotone" : "NOT monotone")};
}

rf::RadianceField desk_field;
bool desk_trained = false;
rf::SyntheticScene desk_scene;
tr::RendererTrainConfig desk_config;

Outcome desk_end_to_end() {
  const serve::ProjectConfig pc = serve::default_project_config();
  desk_config = pc.renderer;
  const auto t0 = Clock::now();
  desk_scene = rf::synth_scene(pc.scene);
  const double scene_sec = seconds_since(t0);
  const auto t1 = Clock::now();
  tr::TrainResult res = tr::train_renderer(desk_scene, desk_config);
  const double train_sec = seconds_since(t1);
  desk_field = res.field;
  desk_trained = true;
  const std::vector<double> psnr = tr::training_psnr(desk_field, desk_scene, desk_config);
  const double mean = std::accumulate(psnr.begin(), psnr.end(), 0.0) / static_cast<double>(psnr.size());
  const double lo = *std::min_element(psnr.begin(), psnr.end());
  const double total = scene_sec + train_sec;
  return {mean >= 25.0 && total <= 900.0,
          fmt("%zux%zu, %zu poses x %zu tags = %zu views, %zu iters, %zu rays/batch: training PSNR mean %.2f dB "
              "(min %.2f) >= 25 dB; %.0f s (scene %.0f s + training %.0f s) <= 900 s single-threaded",
              pc.scene.width, pc.scene.height, pc.scene.poses, pc.scene.tags.size(), desk_scene.views.size(),
              desk_config.schedule.total_iters, desk_config.schedule.rays_per_batch, mean, lo, total, scene_sec,
              train_sec)};
}

Outcome audio2exp_recovery() {
  std::vector<a2e::LabeledClip> train, heldout;
  std::vector<hp::LabeledExpression> labeled;
  std::uint64_t k = 0;
  for (Emotion e : {Emotion::happy, Emotion::sad}) {
    for (const char* spk : {"spk0", "spk1"}) {
      train.push_back(features::emit_synthetic_clip(num::derive_seed(7, 1, k), 120, e, spk));
      heldout.push_back(features::emit_synthetic_clip(num::derive_seed(7, 2, k), 40, e, spk));
      ++k;
      const auto& c = train.back();
      for (std::size_t i = 0; i < c.alpha.size(); ++i) labeled.push_back({c.alpha[i], e, c.mar[i], spk});
    }
  }
  const hp::PlaneSet planes = hp::train_emotion_planes(labeled, {});
  const a2e::Audio2ExpConfig cfg = serve::default_project_config().audio2exp;
  const auto t0 = Clock::now();
  const a2e::Audio2ExpResult r = a2e::train_audio2exp(train, planes, cfg);
  const double sec = seconds_since(t0);
  const double rmse = a2e::expression_rmse(heldout, r.params, &planes);

  a2e::Audio2ExpConfig zero = cfg, plain = cfg;
  zero.iterations = plain.iterations = 200;
  zero.rho = 0.0;
  plain.regression_only = true;
  const a2e::Audio2ExpResult rz = a2e::train_audio2exp(train, planes, zero);
  const a2e::Audio2ExpResult rp = a2e::train_audio2exp(train, planes, plain);
  const bool same = rz.losses == rp.losses && a2e::encode_alignment(rz.params) == a2e::encode_alignment(rp.params);
  return {rmse < 0.3 && same,
          fmt("2 speakers x 2 tags, d=%zu, %zu iters (%.0f s): held-out RMSE %.4f < 0.3; rho=0 vs regression-only "
              "(200 iters, same seed) %s",
              cfg.model.d, cfg.iterations, sec, rmse, same ? "bit-identical" : "DIFFER")};
}

Outcome ablation_modes() {
  std::string detail;
  bool ok = true;
  for (const char* mode : {"no_alignment", "no_refinement", "full"}) {
    const fs::path dir = work_dir(std::string("smoke_") + mode);
    const int code = run_cli("smoke --mode " + std::string(mode) + " --work-dir '" + dir.string() + "'");
    ok = ok && code == 0;
    detail += fmt("%s%s exit %d", detail.empty() ? "" : ", ", mode, code);
  }
  return {ok, "emohead smoke: " + detail};
}

Outcome determinism() {
  const fs::path a = work_dir("det_a"), b = work_dir("det_b");
  for (const fs::path& d : {a, b}) {
    const std::string cfg = smoke_config_file(d);
    for (const char* cmd : {"emit-clips", "train-planes", "train-audio2exp", "train-renderer"}) {
      if (run_cli(std::string(cmd) + " " + cfg) != 0) return {false, std::string(cmd) + " failed"};
    }
  }
  std::size_t compared = 0, differing = 0;
  for (const char* dir : {"planes", "checkpoints"}) {
    for (const auto& e : fs::directory_iterator(a / "work" / dir)) {
      const fs::path other = b / "work" / dir / e.path().filename();
      ++compared;
      if (!fs::exists(other) || num::read_bytes(e.path()) != num::read_bytes(other)) ++differing;
    }
  }
  // Serial vs threaded frames of the desk field (or a fresh field if that run failed).
  const rf::RadianceField field = desk_trained ? desk_field : rf::RadianceField::init(desk_config.effective_field(), 3);
  const ExpressionParams alpha = rf::scene_alpha(Emotion::happy);
  bool frames_equal = true;
  rf::RenderConfig rc = rf::scene_render_config(serve::default_project_config().scene);
  rc.samples = desk_config.samples;
  const auto poses = rf::orbit_poses(3, 3.0, 15.0, rf::Intrinsics::centred(32, 32, 48.0));
  for (bool stratified : {false, true}) {
    rc.stratified = stratified;
    for (const auto& pose : poses) {
      rc.threads = 1;
      const rf::Image serial = rf::render_frame(field, pose, alpha.alpha, rc);
      for (std::size_t t : {2, 4, 7}) {
        rc.threads = t;
        frames_equal = frames_equal && rf::render_frame(field, pose, alpha.alpha, rc) == serial;
      }
    }
  }
  return {differing == 0 && compared >= 5 && frames_equal,
          fmt("two CLI runs (emit-clips, train-planes, train-audio2exp, train-renderer): %zu/%zu artifacts "
              "byte-identical; 32x32 frames at 1 vs 2/4/7 threads %s",
              compared - differing, compared, frames_equal ? "bit-identical" : "DIFFER")};
}

}  // namespace

int main() {
  report("gradient fidelity", gradient_fidelity);
  report("attention invariants", attention_invariants);
  report("hyperplane oracle", hyperplane_oracle);
  report("refinement algebra", refinement_algebra);
  report("volume rendering oracle", volume_rendering);
  report("desk-scale end-to-end", desk_end_to_end);
  report("audio2exp recovery", audio2exp_recovery);
  report("ablation modes", ablation_modes);
  report("determinism", determinism);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures;
}
