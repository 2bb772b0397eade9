#include "emohead/serve/commands.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include <httplib.h>

#include "emohead/features/clip.hpp"
#include "emohead/hyperplane/hyperplane.hpp"
#include "emohead/numerics/checkpoint.hpp"
#include "emohead/numerics/random.hpp"
#include "emohead/renderfield/scene.hpp"
#include "emohead/serve/http.hpp"
#include "emohead/training/trainer.hpp"

namespace emohead::serve {

using json = nlohmann::json;
namespace rf = renderfield;
namespace num = emohead::numerics;

namespace {

constexpr std::uint64_t kTrainClipStream = 41;
constexpr std::uint64_t kHeldoutClipStream = 42;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void require_dir(const fs::path& p, const std::string& what) {
  if (!fs::is_directory(p)) throw CommandError(what + " directory " + p.string() + " does not exist");
}

void write_clip(const fs::path& dir, const std::string& stem, const features::SyntheticClip& s) {
  features::save_features(dir / (stem + ".features"), s.clip);
  features::save_ground_truth(dir / (stem + ".gt.json"), s);
}

std::string speaker_name(std::size_t i) { return "spk" + std::to_string(i); }

hyperplane::PlaneSet planes_for(const ProjectConfig& c, const std::vector<audio2exp::LabeledClip>& clips) {
  require_dir(c.paths.planes, "planes");
  std::set<Emotion> tags;
  for (const auto& clip : clips) tags.insert(clip.clip.emotion);
  hyperplane::PlaneSet planes;
  for (Emotion e : tags) {
    const fs::path p = c.paths.planes / (std::string(to_string(e)) + ".json");
    if (!fs::exists(p)) throw CommandError("missing plane file for tag '" + std::string(to_string(e)) + "': " + p.string());
    planes[e] = hyperplane::load_plane(p);
  }
  return planes;
}

const hyperplane::PlaneSet* rmse_planes(const ProjectConfig& c, const hyperplane::PlaneSet& planes) {
  return c.audio2exp.use_refinement ? &planes : nullptr;
}

}  // namespace

fs::path train_clip_dir(const ProjectConfig& c) { return c.paths.features / "train"; }
fs::path heldout_clip_dir(const ProjectConfig& c) { return c.paths.features / "heldout"; }
fs::path audio2exp_checkpoint(const ProjectConfig& c) { return c.paths.checkpoints / "audio2exp.ckpt"; }
fs::path renderer_checkpoint(const ProjectConfig& c) { return c.paths.checkpoints / "renderer.ckpt"; }
fs::path renderer_log(const ProjectConfig& c) { return c.paths.checkpoints / "renderer_log.csv"; }

std::vector<audio2exp::LabeledClip> load_clip_dir(const fs::path& dir) {
  require_dir(dir, "clip");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".features") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<audio2exp::LabeledClip> out;
  for (const fs::path& f : files) {
    audio2exp::LabeledClip clip;
    clip.clip = features::load_features(f);
    fs::path gt = f;
    gt.replace_extension(".gt.json");
    if (!fs::exists(gt)) throw CommandError("ground truth missing for " + f.string());
    features::load_ground_truth(gt, clip);
    if (clip.alpha.size() != clip.clip.size()) throw CommandError(gt.string() + ": frame count differs from features");
    out.push_back(std::move(clip));
  }
  return out;
}

void cmd_emit_clips(const ProjectConfig& c, std::ostream& out) {
  if (c.clips.tags.empty() || c.clips.speakers == 0 || c.clips.clips_per_speaker == 0 || c.clips.frames == 0) {
    throw CommandError("clip set is empty: need tags, speakers, clips_per_speaker and frames");
  }
  const fs::path train = train_clip_dir(c);
  const fs::path heldout = heldout_clip_dir(c);
  fs::create_directories(train);
  fs::create_directories(heldout);
  const features::SyntheticClipOptions opts{c.clips.variation, features::kDefaultFps};
  std::uint64_t k = 0;
  std::size_t written = 0;
  for (Emotion e : c.clips.tags) {
    for (std::size_t s = 0; s < c.clips.speakers; ++s) {
      const std::string tag(to_string(e));
      for (std::size_t i = 0; i < c.clips.clips_per_speaker; ++i, ++k, ++written) {
        const auto clip = features::emit_synthetic_clip(num::derive_seed(c.seed, kTrainClipStream, k), c.clips.frames, e,
                                                        speaker_name(s), opts);
        write_clip(train, tag + "_" + speaker_name(s) + "_" + std::to_string(i), clip);
      }
      if (c.clips.heldout_frames > 0) {
        const auto clip = features::emit_synthetic_clip(num::derive_seed(c.seed, kHeldoutClipStream, k),
                                                        c.clips.heldout_frames, e, speaker_name(s), opts);
        write_clip(heldout, tag + "_" + speaker_name(s), clip);
      }
    }
  }
  out << "wrote " << written << " training clips to " << train.string() << "\n";
}

void cmd_train_planes(const ProjectConfig& c, std::ostream& out) {
  const auto clips = load_clip_dir(train_clip_dir(c));
  std::vector<hyperplane::LabeledExpression> samples;
  for (const auto& clip : clips) {
    for (std::size_t i = 0; i < clip.alpha.size(); ++i) {
      samples.push_back({clip.alpha[i], clip.clip.emotion, clip.mar[i], clip.clip.speaker_id});
    }
  }
  if (samples.empty()) throw CommandError("no labeled expressions in " + train_clip_dir(c).string());
  std::set<Emotion> present;
  for (const auto& s : samples) present.insert(s.emotion);
  for (Emotion e : c.clips.tags) {
    if (!present.count(e)) throw CommandError("no labeled data for tag '" + std::string(to_string(e)) + "'");
  }
  if (present.size() < 2) throw CommandError("need at least two tags to train planes");
  const hyperplane::PlaneSet planes = hyperplane::train_emotion_planes(samples, c.planes);
  fs::create_directories(c.paths.planes);
  hyperplane::save_planes(c.paths.planes, planes, c.planes);
  for (const auto& [e, p] : planes) {
    out << "plane " << to_string(e) << " train_accuracy " << fmt("%.4f", p.train_accuracy) << "\n";
  }
}

double cmd_train_audio2exp(const ProjectConfig& c, std::ostream& out) {
  const auto train = load_clip_dir(train_clip_dir(c));
  if (train.empty()) throw CommandError("no training clips in " + train_clip_dir(c).string());
  const auto heldout = load_clip_dir(heldout_clip_dir(c));
  if (heldout.empty()) throw CommandError("no held-out clips in " + heldout_clip_dir(c).string());
  std::vector<audio2exp::LabeledClip> all = train;
  all.insert(all.end(), heldout.begin(), heldout.end());
  const hyperplane::PlaneSet planes = planes_for(c, all);

  const std::size_t every = std::max<std::size_t>(1, c.audio2exp.iterations / 10);
  const auto result = audio2exp::train_audio2exp(train, planes, c.audio2exp, [&](std::size_t it, double loss) {
    if (it % every == 0) out << "iter " << it << " loss " << fmt("%.6f", loss) << "\n";
  });
  const double rmse = audio2exp::expression_rmse(heldout, result.params, rmse_planes(c, planes));
  fs::create_directories(c.paths.checkpoints);
  audio2exp::save_alignment(audio2exp_checkpoint(c), result.params,
                            {{"train", audio2exp::to_json(c.audio2exp)}, {"heldout_rmse", rmse}});
  out << "heldout rmse " << fmt("%.17g", rmse) << "\n";
  return rmse;
}

double cmd_eval_audio2exp(const ProjectConfig& c, std::ostream& out) {
  const fs::path ckpt = audio2exp_checkpoint(c);
  if (!fs::exists(ckpt)) throw CommandError("audio2exp checkpoint " + ckpt.string() + " not found");
  const auto params = audio2exp::load_alignment(ckpt);
  const auto heldout = load_clip_dir(heldout_clip_dir(c));
  if (heldout.empty()) throw CommandError("no held-out clips in " + heldout_clip_dir(c).string());
  const hyperplane::PlaneSet planes = planes_for(c, heldout);
  const double rmse = audio2exp::expression_rmse(heldout, params, rmse_planes(c, planes));
  out << "heldout rmse " << fmt("%.17g", rmse) << "\n";
  return rmse;
}

void cmd_train_renderer(const ProjectConfig& c, bool resume, std::ostream& out, std::optional<std::size_t> stop_after) {
  if (resume && !fs::exists(renderer_checkpoint(c))) {
    throw CommandError("cannot resume: " + renderer_checkpoint(c).string() + " not found");
  }
  const rf::SyntheticScene scene = rf::synth_scene(c.scene);
  fs::create_directories(c.paths.scenes);
  for (std::size_t i = 0; i < scene.views.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "view_%02zu_%s.png", i, std::string(to_string(scene.views[i].tag)).c_str());
    rf::save_png(c.paths.scenes / name, scene.views[i].image);
  }
  fs::create_directories(c.paths.checkpoints);
  training::TrainOptions opts;
  opts.checkpoint = renderer_checkpoint(c);
  opts.checkpoint_every = c.checkpoint_every;
  opts.resume = resume;
  opts.log_csv = renderer_log(c);
  opts.stop_after = stop_after;
  const std::size_t every = std::max<std::size_t>(1, c.renderer.schedule.total_iters / 20);
  opts.progress = [&](const training::LossRow& row) {
    if (row.iter % every == 0) {
      out << "iter " << row.iter << " loss " << fmt("%.5f", row.loss) << " lr " << fmt("%.6f", row.lr) << "\n";
    }
  };
  const auto result = training::train_renderer(scene, c.renderer, opts);
  for (const auto& row : result.log) {
    if (!std::isfinite(row.loss)) throw CommandError("non-finite loss at iteration " + std::to_string(row.iter));
  }
  const auto psnr = training::training_psnr(result.field, scene, c.renderer);
  const double mean = std::accumulate(psnr.begin(), psnr.end(), 0.0) / static_cast<double>(psnr.size());
  out << "training psnr mean " << fmt("%.3f", mean) << " min " << fmt("%.3f", *std::min_element(psnr.begin(), psnr.end()))
      << " dB\n";
}

void cmd_render(const ProjectConfig& c, const RenderRequest& r, const fs::path& out_path, std::ostream& out) {
  const ServiceState state = ServiceState::load(c);
  const std::string bytes = state.encode(r, state.render(r));
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  num::write_bytes(out_path, bytes);
  out << "wrote " << out_path.string() << "\n";
}

void cmd_sweep_dim(const ProjectConfig& c, const SweepRequest& s, const fs::path& out_dir, std::ostream& out) {
  if (s.dim >= kExpressionDim) throw CommandError("dim must be in [0, 9], got " + std::to_string(s.dim));
  const ServiceState state = ServiceState::load(c);
  const auto frames = state.sweep(s);
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03zu.%s", i, s.base.raw ? "raw" : "png");
    num::write_bytes(out_dir / name, state.encode(s.base, frames[i]));
  }
  out << "wrote " << frames.size() << " frames to " << out_dir.string() << "\n";
}

void cmd_serve(const ProjectConfig& c, const std::string& host, int port, std::ostream& out) {
  const ServiceState state = ServiceState::load(c);
  httplib::Server server;
  install_routes(server, state);
  out << "serving mode " << training::to_string(state.mode()) << " on http://" << host << ":" << port << std::endl;
  if (!server.listen(host, port)) throw CommandError("cannot listen on " + host + ":" + std::to_string(port));
}

void cmd_smoke(const ProjectConfig& c, std::ostream& out) {
  out << "smoke run, mode " << training::to_string(c.mode) << "\n";
  cmd_emit_clips(c, out);
  cmd_train_planes(c, out);
  cmd_train_audio2exp(c, out);
  cmd_train_renderer(c, false, out);
  RenderRequest r;
  r.emotion = c.clips.tags.back();
  r.tau = 1.0;
  r.resolution = c.render.resolution;
  cmd_render(c, r, c.paths.checkpoints / "smoke.png", out);
  out << "smoke ok\n";
}

}  // namespace emohead::serve
