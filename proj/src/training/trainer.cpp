#include "emohead/training/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "emohead/numerics/checkpoint.hpp"
#include "emohead/numerics/errors.hpp"
#include "emohead/numerics/ops.hpp"
#include "emohead/numerics/random.hpp"
#include "emohead/renderfield/render.hpp"

namespace emohead::training {

namespace num = emohead::numerics;
namespace rf = emohead::renderfield;
using json = nlohmann::json;

namespace {

constexpr std::uint64_t kBatchStream = 71;
constexpr std::uint64_t kJitterStream = 72;
constexpr std::uint64_t kRefineJitterStream = 73;
constexpr const char* kCheckpointKind = "radiance_field";

rf::RenderConfig training_render_config(const rf::SyntheticScene& scene, const RendererTrainConfig& config) {
  rf::RenderConfig rc = scene.render;
  rc.samples = config.samples;
  rc.stratified = config.stratified;
  rc.validate();
  return rc;
}

std::vector<rf::Ray> pose_rays(const rf::CameraPose& pose, std::size_t width, std::size_t height,
                               const rf::RenderConfig& rc) {
  rf::CameraPose p = pose;
  p.intrinsics = pose.intrinsics.resized(width, height);
  std::vector<rf::Ray> rays;
  rays.reserve(width * height);
  for (std::size_t v = 0; v < height; ++v) {
    for (std::size_t u = 0; u < width; ++u) rays.push_back(rf::generate_ray(p, u, v, rc.t_near, rc.t_far));
  }
  return rays;
}

Tensor repeated_rows(std::span<const double> row, std::size_t count) {
  Tensor t({count, row.size()});
  for (std::size_t i = 0; i < count; ++i) std::copy(row.begin(), row.end(), t.data() + i * row.size());
  return t;
}

// Full res×res render of a pose on the tape, rows in pixel order.
Var render_image_vars(const rf::FieldVars& fv, const rf::CameraPose& pose, std::span<const double> cond,
                      std::size_t res, const rf::RenderConfig& rc, std::uint64_t jitter_seed) {
  const std::vector<rf::Ray> rays = pose_rays(pose, res, res, rc);
  std::vector<std::uint64_t> seeds(rays.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = num::derive_seed(jitter_seed, i);
  const rf::RaySamples s = rf::sample_rays(rays, repeated_rows(cond, rays.size()), seeds, *fv.config, rc);
  return rf::render_rays(fv, s, rc.background);
}

Tensor resampled_target(const rf::Image& image, std::size_t res) {
  return num::matmul(box_resample_matrix(image.width, image.height, res), image_tensor(image));
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text, bool append) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, append ? std::ios::binary | std::ios::app : std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string_view to_string(AblationMode m) {
  switch (m) {
    case AblationMode::full: return "full";
    case AblationMode::no_alignment: return "no_alignment";
    case AblationMode::no_refinement: return "no_refinement";
  }
  return "full";
}

AblationMode ablation_mode_from_string(std::string_view name) {
  for (AblationMode m : {AblationMode::full, AblationMode::no_alignment, AblationMode::no_refinement}) {
    if (name == to_string(m)) return m;
  }
  throw ConfigError("unknown ablation mode '" + std::string(name) + "' (expected full, no_alignment, no_refinement)");
}

std::size_t conditioning_width(AblationMode m) {
  return m == AblationMode::no_refinement ? kExpressionDim + 1 : kExpressionDim;
}

std::vector<double> field_conditioning(const ExpressionParams& alpha, Emotion tag, AblationMode mode) {
  std::vector<double> c;
  if (mode == AblationMode::no_refinement) c.push_back(static_cast<double>(emotion_index(tag)));
  c.insert(c.end(), alpha.alpha.begin(), alpha.alpha.end());
  return c;
}

rf::FieldConfig RendererTrainConfig::effective_field() const {
  rf::FieldConfig f = field;
  f.cond_dim = conditioning_width(mode);
  return f;
}

json to_json(const RendererTrainConfig& c) {
  return {{"field", rf::to_json(c.effective_field())},
          {"samples", c.samples},
          {"stratified", c.stratified},
          {"schedule", to_json(c.schedule)},
          {"weights", to_json(c.weights)},
          {"mode", std::string(to_string(c.mode))},
          {"refine_resolution", c.refine_resolution},
          {"scorer_seed", c.scorer_seed}};
}

RendererTrainConfig renderer_train_config_from_json(const json& j) {
  RendererTrainConfig c;
  if (j.contains("field")) c.field = rf::field_config_from_json(j.at("field"));
  c.samples = j.value("samples", c.samples);
  c.stratified = j.value("stratified", c.stratified);
  if (j.contains("schedule")) c.schedule = train_schedule_from_json(j.at("schedule"));
  if (j.contains("weights")) c.weights = loss_weights_from_json(j.at("weights"));
  if (j.contains("mode")) c.mode = ablation_mode_from_string(j.at("mode").get<std::string>());
  c.refine_resolution = j.value("refine_resolution", c.refine_resolution);
  c.scorer_seed = j.value("scorer_seed", c.scorer_seed);
  c.field = c.effective_field();
  return c;
}

std::string loss_csv(std::span<const LossRow> rows) {
  std::string out = "iter,loss,photo,cord,shape,lr\n";
  for (const LossRow& r : rows) {
    out += std::to_string(r.iter) + "," + fmt(r.loss) + "," + fmt(r.photo) + "," + fmt(r.cord) + "," +
           fmt(r.shape) + "," + fmt(r.lr) + "\n";
  }
  return out;
}

std::string encode_training_checkpoint(const RadianceField& field, const num::AdamState& adam, std::size_t next_iter,
                                       const RendererTrainConfig& config) {
  num::ConstParamList params = field.parameters();
  const std::size_t n = params.size();
  if (adam.first_moment().size() != n) throw DimensionError("adam state does not match field parameters");
  for (std::size_t i = 0; i < n; ++i) params.emplace_back("adam.m." + params[i].first, &adam.first_moment()[i]);
  for (std::size_t i = 0; i < n; ++i) params.emplace_back("adam.v." + params[i].first, &adam.second_moment()[i]);
  json meta = {{"kind", kCheckpointKind},
               {"config", rf::to_json(field.config)},
               {"training", {{"next_iter", next_iter}, {"adam_step", adam.step()}, {"config", to_json(config)}}}};
  return num::encode_checkpoint(params, meta);
}

TrainingCheckpoint load_training_checkpoint(const std::filesystem::path& path) {
  const num::Checkpoint ckpt = num::load_checkpoint(path);
  if (ckpt.meta.value("kind", "") != kCheckpointKind || !ckpt.meta.contains("training")) {
    throw LoadError(path.string() + ": not a renderer training checkpoint");
  }
  TrainingCheckpoint out;
  out.field = RadianceField::zeros(rf::field_config_from_json(ckpt.meta.at("config")));
  num::assign_parameters(ckpt, out.field.parameters());
  const json& t = ckpt.meta.at("training");
  out.next_iter = t.at("next_iter").get<std::size_t>();
  out.config = t.at("config");
  std::vector<Tensor> m, v;
  for (const auto& [name, tensor] : out.field.parameters()) {
    m.push_back(ckpt.get("adam.m." + name));
    v.push_back(ckpt.get("adam.v." + name));
  }
  const double lr = out.config.contains("schedule") ? out.config["schedule"].value("lr", 5e-3) : 5e-3;
  out.adam = num::AdamState(num::AdamConfig{lr}, out.field.parameters());
  out.adam.restore(t.at("adam_step").get<std::uint64_t>(), std::move(m), std::move(v));
  return out;
}

Var refine_view_loss(const rf::FieldVars& field, const rf::SyntheticScene& scene, std::size_t view,
                     const RendererTrainConfig& config, std::size_t resolution, const SemanticScorer& scorer,
                     const ShapeProbe& probe) {
  const rf::GroundTruthView& v = scene.views.at(view);
  rf::RenderConfig rc = training_render_config(scene, config);
  rc.stratified = false;
  const std::vector<double> cond = field_conditioning(v.alpha, v.tag, config.mode);
  const Var img = render_image_vars(field, v.pose, cond, resolution, rc, 0);
  const Var photo = photometric_loss(img, resampled_target(v.image, resolution));
  const Var cord = semantic_alignment_loss(img, resolution, resolution, v.tag, scorer);
  const Var shape = shape_loss(scene.beta_id.at(v.identity), probe.estimate(img, resolution, resolution));
  return combine_losses(config.schedule.boundary(), photo, cord, shape, config.weights, config.schedule);
}

TrainResult train_renderer(const rf::SyntheticScene& scene, const RendererTrainConfig& config,
                           const TrainOptions& options) {
  const LinearSemanticScorer scorer(config.scorer_seed);
  const LinearShapeProbe probe(config.scorer_seed);
  return train_renderer(scene, config, options, scorer, probe);
}

TrainResult train_renderer(const rf::SyntheticScene& scene, const RendererTrainConfig& config,
                           const TrainOptions& options, const SemanticScorer& scorer, const ShapeProbe& probe) {
  if (scene.views.empty()) throw ConfigError("train_renderer: no ground-truth views");
  const TrainSchedule& sched = config.schedule;
  if (sched.rays_per_batch == 0) throw ConfigError("train_renderer: rays_per_batch must be positive");
  if (config.refine_resolution == 0) throw ConfigError("train_renderer: refine_resolution must be positive");
  const rf::FieldConfig fc = config.effective_field();
  const rf::RenderConfig rc = training_render_config(scene, config);

  TrainResult res;
  if (options.resume) {
    TrainingCheckpoint ck = load_training_checkpoint(options.checkpoint);
    if (rf::to_json(ck.field.config) != rf::to_json(fc)) {
      throw ConfigError(options.checkpoint.string() + ": field configuration differs from the run config");
    }
    res.field = std::move(ck.field);
    res.adam = std::move(ck.adam);
    res.next_iter = ck.next_iter;
  } else {
    res.field = RadianceField::init(fc, sched.seed);
    res.adam = num::AdamState(num::AdamConfig{sched.lr}, res.field.parameters());
  }

  const std::size_t nviews = scene.views.size();
  const std::size_t w = scene.config.width, h = scene.config.height, npix = w * h;
  std::vector<std::vector<rf::Ray>> rays;
  std::vector<std::vector<double>> conds;
  for (const rf::GroundTruthView& v : scene.views) {
    if (v.image.width != w || v.image.height != h) throw DimensionError("train_renderer: view size differs");
    rays.push_back(pose_rays(v.pose, w, h, rc));
    conds.push_back(field_conditioning(v.alpha, v.tag, config.mode));
  }

  const std::size_t r = sched.rays_per_batch;
  const std::size_t stop = std::min(sched.total_iters, options.stop_after.value_or(sched.total_iters));
  const bool refine_terms = config.weights.lambda_cord != 0.0 || config.weights.lambda_shape != 0.0;
  auto save = [&](std::size_t next) {
    num::write_bytes(options.checkpoint, encode_training_checkpoint(res.field, res.adam, next, config));
  };

  for (std::size_t iter = res.next_iter; iter < stop; ++iter) {
    num::Rng rng(num::derive_seed(sched.seed, kBatchStream, iter));
    std::vector<rf::Ray> batch(r);
    std::vector<std::uint64_t> seeds(r);
    Tensor cond({r, fc.cond_dim});
    Tensor target({r, 3});
    for (std::size_t i = 0; i < r; ++i) {
      const std::size_t idx = num::uniform_index(rng, nviews * npix);
      const std::size_t v = idx / npix, p = idx % npix;
      batch[i] = rays[v][p];
      seeds[i] = num::derive_seed(sched.seed, kJitterStream, iter * r + i);
      std::copy(conds[v].begin(), conds[v].end(), cond.data() + i * fc.cond_dim);
      for (std::size_t k = 0; k < 3; ++k) target.at(i, k) = scene.views[v].image.rgb[p * 3 + k];
    }

    Tape tape;
    const rf::FieldVars fv = rf::bind(tape, res.field, true);
    const rf::RaySamples samples = rf::sample_rays(batch, cond, seeds, fc, rc);
    const Var photo = photometric_loss(rf::render_rays(fv, samples, rc.background), target);
    Var cord, shape;
    if (sched.refining(iter) && refine_terms) {
      const std::size_t v = num::uniform_index(rng, nviews);
      const rf::GroundTruthView& gv = scene.views[v];
      const std::size_t res_px = config.refine_resolution;
      const Var img = render_image_vars(fv, gv.pose, conds[v], res_px, rc,
                                        num::derive_seed(sched.seed, kRefineJitterStream, iter));
      cord = semantic_alignment_loss(img, res_px, res_px, gv.tag, scorer);
      shape = shape_loss(scene.beta_id.at(gv.identity), probe.estimate(img, res_px, res_px));
    }
    const Var total = combine_losses(iter, photo, cord, shape, config.weights, sched);
    const double loss = total.value()[0];
    if (!std::isfinite(loss)) throw NonFiniteError("train_renderer: non-finite loss at iteration " + std::to_string(iter));
    tape.backward(total);
    const std::vector<Tensor> grads = num::gradients(tape, fv.leaves);
    const double lr = sched.lr_at(iter);
    res.adam.set_lr(lr);
    res.adam.update(res.field.parameters(), grads);

    LossRow row{iter, loss, photo.value()[0], cord.valid() ? cord.value()[0] : 0.0,
                shape.valid() ? shape.value()[0] : 0.0, lr};
    res.log.push_back(row);
    if (options.progress) options.progress(row);
    res.next_iter = iter + 1;
    if (!options.checkpoint.empty() && options.checkpoint_every > 0 && res.next_iter % options.checkpoint_every == 0 &&
        res.next_iter < stop) {
      save(res.next_iter);
    }
  }
  if (!options.checkpoint.empty()) save(res.next_iter);
  if (!options.log_csv.empty()) {
    std::string csv = loss_csv(res.log);
    const bool append = options.resume && std::filesystem::exists(options.log_csv);
    if (append) csv = csv.substr(csv.find('\n') + 1);
    write_text(options.log_csv, csv, append);
  }
  return res;
}

rf::Image render_view(const RadianceField& field, const rf::GroundTruthView& view, const rf::SyntheticScene& scene,
                      const RendererTrainConfig& config) {
  rf::RenderConfig rc = training_render_config(scene, config);
  rc.stratified = false;
  rc.width = view.image.width;
  rc.height = view.image.height;
  return rf::render_frame(field, view.pose, field_conditioning(view.alpha, view.tag, config.mode), rc);
}

std::vector<double> training_psnr(const RadianceField& field, const rf::SyntheticScene& scene,
                                  const RendererTrainConfig& config) {
  std::vector<double> out;
  for (const rf::GroundTruthView& v : scene.views) out.push_back(rf::psnr(render_view(field, v, scene, config), v.image));
  return out;
}

}  // namespace emohead::training
