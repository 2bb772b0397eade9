#include "emohead/serve/service.hpp"

#include <cmath>
#include <numbers>

#include "emohead/numerics/errors.hpp"
#include "emohead/renderfield/scene.hpp"

namespace emohead::serve {

using json = nlohmann::json;
namespace rf = renderfield;

namespace {

double number(const json& j, const std::string& key, const std::string& path, double fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) throw RequestError(path, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw RequestError(path, "must be finite");
  return x;
}

std::size_t count(const json& j, const std::string& key, std::size_t fallback, std::size_t lo, std::size_t hi) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned()) throw RequestError(key, "expected an integer");
  const auto x = v.get<std::int64_t>();
  if (x < static_cast<std::int64_t>(lo) || x > static_cast<std::int64_t>(hi)) {
    throw RequestError(key, "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return static_cast<std::size_t>(x);
}

Emotion tag(const json& v, const std::string& key) {
  if (!v.is_string()) throw RequestError(key, "expected an emotion tag string");
  const auto e = parse_emotion(v.get<std::string>());
  if (!e) throw UnknownTagError("unknown emotion '" + v.get<std::string>() + "'; known tags: " + emotion_list());
  return *e;
}

RenderRequest parse_render(const json& j, bool emotion_required) {
  if (!j.is_object()) throw RequestError("body", "expected a JSON object");
  RenderRequest r;
  if (j.contains("emotion") && !j.at("emotion").is_null()) {
    r.emotion = tag(j.at("emotion"), "emotion");
  } else if (emotion_required) {
    throw RequestError("emotion", "required");
  }
  r.tau = number(j, "tau", "tau", 0.0);
  r.lambda = number(j, "lambda", "lambda", 0.0);
  if (r.lambda < 0.0 || r.lambda > 1.0) throw RequestError("lambda", "must be in [0, 1]");
  if (j.contains("second_emotion") && !j.at("second_emotion").is_null()) {
    r.second_emotion = tag(j.at("second_emotion"), "second_emotion");
  }
  if (r.lambda != 0.0 && !r.second_emotion) throw RequestError("lambda", "requires second_emotion");
  if (j.contains("camera") && !j.at("camera").is_null()) {
    const json& c = j.at("camera");
    if (!c.is_object()) throw RequestError("camera", "expected an object");
    r.camera.azimuth_deg = number(c, "azimuth_deg", "camera.azimuth_deg", r.camera.azimuth_deg);
    r.camera.elevation_deg = number(c, "elevation_deg", "camera.elevation_deg", r.camera.elevation_deg);
    r.camera.radius = number(c, "radius", "camera.radius", r.camera.radius);
  }
  if (std::abs(r.camera.elevation_deg) >= 89.0) throw RequestError("camera.elevation_deg", "must be in (-89, 89)");
  if (r.camera.radius <= 1.3) throw RequestError("camera.radius", "must exceed 1.3");
  r.resolution = count(j, "resolution", r.resolution, 1, kMaxResolution);
  if (j.contains("alpha_tilde") && !j.at("alpha_tilde").is_null()) {
    const json& a = j.at("alpha_tilde");
    if (!a.is_array() || a.size() != kExpressionDim) {
      throw RequestError("alpha_tilde", "expected an array of " + std::to_string(kExpressionDim) + " numbers");
    }
    ExpressionParams p;
    for (std::size_t i = 0; i < kExpressionDim; ++i) {
      if (!a[i].is_number()) throw RequestError("alpha_tilde", "expected numbers");
      p[i] = a[i].get<double>();
      if (!std::isfinite(p[i])) throw RequestError("alpha_tilde", "must be finite");
    }
    r.alpha_tilde = p;
  }
  if (j.contains("format") && !j.at("format").is_null()) {
    const json& f = j.at("format");
    if (!f.is_string() || (f != "png" && f != "raw")) throw RequestError("format", "expected \"png\" or \"raw\"");
    r.raw = f == "raw";
  }
  return r;
}

}  // namespace

RenderRequest render_request_from_json(const json& j) { return parse_render(j, true); }

SweepRequest sweep_request_from_json(const json& j) {
  SweepRequest s;
  s.base = parse_render(j, false);
  if (!j.contains("dim")) throw RequestError("dim", "required");
  s.dim = count(j, "dim", 0, 0, kExpressionDim - 1);
  s.from = number(j, "from", "from", s.from);
  s.to = number(j, "to", "to", s.to);
  s.steps = count(j, "steps", s.steps, 1, kMaxSweepSteps);
  return s;
}

json to_json(const RenderRequest& r) {
  json j = {{"emotion", std::string(to_string(r.emotion))},
            {"tau", r.tau},
            {"lambda", r.lambda},
            {"camera",
             {{"azimuth_deg", r.camera.azimuth_deg},
              {"elevation_deg", r.camera.elevation_deg},
              {"radius", r.camera.radius}}},
            {"resolution", r.resolution}};
  if (r.second_emotion) j["second_emotion"] = std::string(to_string(*r.second_emotion));
  if (r.alpha_tilde) j["alpha_tilde"] = r.alpha_tilde->alpha;
  if (r.raw) j["format"] = "raw";
  return j;
}

std::vector<double> sweep_values(double from, double to, std::size_t steps) {
  if (steps == 0) throw RequestError("steps", "must be at least 1");
  if (steps == 1) return {0.5 * (from + to)};
  std::vector<double> out(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    out[i] = from + (to - from) * static_cast<double>(i) / static_cast<double>(steps - 1);
  }
  out.back() = to;
  return out;
}

rf::CameraPose orbit_pose(const OrbitCamera& cam, std::size_t resolution, const rf::SceneConfig& scene) {
  const double az = cam.azimuth_deg * std::numbers::pi / 180.0;
  const double el = cam.elevation_deg * std::numbers::pi / 180.0;
  const rf::Vec3 eye{cam.radius * std::cos(el) * std::sin(az), cam.radius * std::sin(el),
                     cam.radius * std::cos(el) * std::cos(az)};
  const rf::Intrinsics in = rf::Intrinsics::centred(32, 32, scene.focal).resized(resolution, resolution);
  return rf::look_at(eye, {0, 0, 0}, {0, 1, 0}, in);
}

ServiceState::ServiceState(ProjectConfig config, rf::RadianceField field, training::RendererTrainConfig train,
                           hyperplane::PlaneSet planes)
    : config_(std::move(config)), field_(std::move(field)), train_(std::move(train)), planes_(std::move(planes)) {
  if (field_.config.cond_dim != training::conditioning_width(train_.mode)) {
    throw ConfigError("field conditioning width does not match mode " + std::string(training::to_string(train_.mode)));
  }
}

ServiceState ServiceState::load(const ProjectConfig& config) {
  const fs::path ckpt = config.paths.checkpoints / "renderer.ckpt";
  if (!fs::exists(ckpt)) throw LoadError(ckpt.string() + ": renderer checkpoint not found (run train-renderer)");
  training::TrainingCheckpoint tc = training::load_training_checkpoint(ckpt);
  training::RendererTrainConfig train = training::renderer_train_config_from_json(tc.config);
  hyperplane::PlaneSet planes = hyperplane::load_planes(config.paths.planes);
  return ServiceState(config, std::move(tc.field), std::move(train), std::move(planes));
}

std::vector<Emotion> ServiceState::emotions() const {
  std::vector<Emotion> out;
  for (const auto& [e, p] : planes_) out.push_back(e);
  return out;
}

const hyperplane::EmotionHyperplane& ServiceState::plane(Emotion e) const {
  const auto it = planes_.find(e);
  if (it == planes_.end()) {
    std::string known;
    for (Emotion k : emotions()) known += (known.empty() ? "" : ", ") + std::string(to_string(k));
    throw UnknownTagError("no plane for emotion '" + std::string(to_string(e)) + "'; available: " + known);
  }
  return it->second;
}

ExpressionParams ServiceState::refined(const RenderRequest& r) const {
  const ExpressionParams base = r.alpha_tilde ? *r.alpha_tilde : rf::scene_alpha(Emotion::neutral);
  const auto& p1 = plane(r.emotion);
  if (!r.second_emotion) return hyperplane::refine(base, r.tau, p1);
  const auto& p2 = plane(*r.second_emotion);
  return hyperplane::refine(base, r.tau, hyperplane::interpolate_planes(p1, p2, r.lambda));
}

std::vector<double> ServiceState::conditioning(const RenderRequest& r) const {
  if (train_.mode != training::AblationMode::no_refinement) {
    return training::field_conditioning(refined(r), r.emotion, train_.mode);
  }
  // [z; α̃]: no plane step, the tag index is blended for two-emotion requests.
  plane(r.emotion);
  const ExpressionParams base = r.alpha_tilde ? *r.alpha_tilde : rf::scene_alpha(Emotion::neutral);
  std::vector<double> cond = training::field_conditioning(base, r.emotion, train_.mode);
  if (r.second_emotion) {
    plane(*r.second_emotion);
    cond[0] = (1.0 - r.lambda) * emotion_index(r.emotion) + r.lambda * emotion_index(*r.second_emotion);
  }
  return cond;
}

std::vector<double> ServiceState::conditioning(const RenderRequest& r, std::size_t dim, double value) const {
  if (dim >= kExpressionDim) throw RequestError("dim", "must be in [0, 9]");
  std::vector<double> cond = conditioning(r);
  const std::size_t offset = train_.mode == training::AblationMode::no_refinement ? 1 : 0;
  cond[offset + dim] = value;
  return cond;
}

rf::Image ServiceState::render_conditioned(const RenderRequest& r, const std::vector<double>& cond) const {
  rf::RenderConfig rc = rf::scene_render_config(config_.scene);
  rc.width = r.resolution;
  rc.height = r.resolution;
  rc.t_near = r.camera.radius - 1.2;
  rc.t_far = r.camera.radius + 1.2;
  rc.samples = config_.render.samples > 0 ? config_.render.samples : train_.samples;
  rc.stratified = false;
  rc.threads = config_.render.threads;
  return rf::render_frame(field_, orbit_pose(r.camera, r.resolution, config_.scene), cond, rc);
}

rf::Image ServiceState::render(const RenderRequest& r) const { return render_conditioned(r, conditioning(r)); }

std::vector<rf::Image> ServiceState::sweep(const SweepRequest& s) const {
  std::vector<rf::Image> out;
  for (double v : sweep_values(s.from, s.to, s.steps)) out.push_back(render_conditioned(s.base, conditioning(s.base, s.dim, v)));
  return out;
}

std::string ServiceState::encode(const RenderRequest& r, const rf::Image& img) const {
  return r.raw ? rf::encode_raw(img) : rf::encode_png(img);
}

}  // namespace emohead::serve
