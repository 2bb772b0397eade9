#include "emohead/serve/config.hpp"

#include <fstream>
#include <sstream>

#include "emohead/numerics/errors.hpp"

namespace emohead::serve {

using json = nlohmann::json;

namespace {

json tag_names(const std::vector<Emotion>& tags) {
  json out = json::array();
  for (Emotion e : tags) out.push_back(std::string(to_string(e)));
  return out;
}

std::vector<Emotion> tags_from(const json& j, const std::string& where) {
  std::vector<Emotion> out;
  for (const json& t : j) {
    if (!t.is_string()) throw ConfigError(where + ": tags must be strings");
    out.push_back(emotion_from_string(t.get<std::string>()));
  }
  return out;
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) {
    // Integer slots reject fractional or negative values.
    if (a.is_number_unsigned() || a.is_number_integer()) return b.is_number_unsigned() || b.is_number_integer();
    return true;
  }
  return a.type() == b.type();
}

// Recursively overlays `patch` onto `base`, rejecting keys or types the base does not have.
void overlay(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError((where.empty() ? "config" : where) + ": expected an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      overlay(slot, value, path);
    } else if (!same_kind(slot, value)) {
      throw ConfigError("config key '" + path + "' expects " + std::string(slot.type_name()) + ", got " +
                        std::string(value.type_name()));
    } else {
      slot = value;
    }
  }
}

void collect_keys(const json& j, const std::string& prefix, std::vector<std::string>& out) {
  for (const auto& [key, value] : j.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) {
      collect_keys(value, path, out);
    } else {
      out.push_back(path);
    }
  }
}

json field_json(const renderfield::FieldConfig& f) {
  json j = renderfield::to_json(f);
  j.erase("cond_dim");  // follows the mode
  return j;
}

}  // namespace

void ProjectConfig::sync() {
  planes.seed = seed;
  audio2exp.seed = seed;
  audio2exp.model.no_alignment = mode == training::AblationMode::no_alignment;
  scene.seed = seed;
  renderer.schedule.seed = seed;
  renderer.scorer_seed = seed;
  renderer.mode = mode;
  renderer.field = renderer.effective_field();
}

ProjectConfig default_project_config() {
  ProjectConfig c;
  c.audio2exp.model.d = 32;
  c.audio2exp.model.d_h = 32;
  c.audio2exp.iterations = 1000;
  c.sync();
  return c;
}

ProjectConfig smoke_project_config(const fs::path& work_dir) {
  ProjectConfig c = default_project_config();
  c.paths = {work_dir / "features", work_dir / "planes", work_dir / "checkpoints", work_dir / "scenes"};
  c.clips.frames = 24;
  c.clips.heldout_frames = 24;
  c.clips.clips_per_speaker = 1;
  c.planes.epochs = 300;
  c.audio2exp.model.d = 8;
  c.audio2exp.model.d_h = 8;
  c.audio2exp.model.window = 2;
  c.audio2exp.model.ffn_hidden = {16};
  c.audio2exp.iterations = 40;
  c.audio2exp.batch = 4;
  c.scene.width = 12;
  c.scene.height = 12;
  c.scene.poses = 3;
  c.scene.oracle_quad = 128;
  c.renderer.field.pos_levels = 6;
  c.renderer.field.trunk_width = 32;
  c.renderer.field.trunk_depth = 2;
  c.renderer.field.color_width = 32;
  c.renderer.samples = 12;
  c.renderer.schedule.total_iters = 200;
  c.renderer.schedule.rays_per_batch = 128;
  c.renderer.refine_resolution = 4;
  c.checkpoint_every = 100;
  c.render.resolution = 12;
  c.sync();
  return c;
}

json to_json(const ProjectConfig& c) {
  const auto& a = c.audio2exp;
  const auto& r = c.renderer;
  return {{"seed", c.seed},
          {"mode", std::string(training::to_string(c.mode))},
          {"checkpoint_every", c.checkpoint_every},
          {"paths",
           {{"features", c.paths.features.string()},
            {"planes", c.paths.planes.string()},
            {"checkpoints", c.paths.checkpoints.string()},
            {"scenes", c.paths.scenes.string()}}},
          {"clips",
           {{"tags", tag_names(c.clips.tags)},
            {"speakers", c.clips.speakers},
            {"clips_per_speaker", c.clips.clips_per_speaker},
            {"frames", c.clips.frames},
            {"heldout_frames", c.clips.heldout_frames},
            {"variation", c.clips.variation}}},
          {"planes",
           {{"lambda_reg", c.planes.lambda_reg},
            {"epochs", c.planes.epochs},
            {"bias_feature", c.planes.bias_feature},
            {"average", c.planes.average},
            {"mar_bins", c.planes.mar_bins},
            {"balance", c.planes.balance}}},
          {"audio2exp",
           {{"d", a.model.d},
            {"d_h", a.model.d_h},
            {"n", a.model.window},
            {"ffn_hidden", a.model.ffn_hidden},
            {"rho", a.rho},
            {"lr", a.lr},
            {"iters", a.iterations},
            {"batch", a.batch},
            {"regression_only", a.regression_only},
            {"use_refinement", a.use_refinement},
            {"allow_single_speaker", a.allow_single_speaker}}},
          {"scene",
           {{"width", c.scene.width},
            {"height", c.scene.height},
            {"poses", c.scene.poses},
            {"orbit_radius", c.scene.orbit_radius},
            {"elevation_deg", c.scene.elevation_deg},
            {"focal", c.scene.focal},
            {"tags", tag_names(c.scene.tags)},
            {"oracle_quad", c.scene.oracle_quad}}},
          {"renderer",
           {{"field", field_json(r.field)},
            {"samples", r.samples},
            {"stratified", r.stratified},
            {"iters", r.schedule.total_iters},
            {"lr", r.schedule.lr},
            {"rays_per_batch", r.schedule.rays_per_batch},
            {"refine_resolution", r.refine_resolution},
            {"loss_weights", training::to_json(r.weights)}}},
          {"render",
           {{"samples", c.render.samples}, {"threads", c.render.threads}, {"resolution", c.render.resolution}}}};
}

ProjectConfig project_config_from_json(const json& j, const ProjectConfig& base) {
  json m = to_json(base);
  overlay(m, j, "");
  ProjectConfig c = base;
  try {
    c.seed = m.at("seed").get<std::uint64_t>();
    c.mode = training::ablation_mode_from_string(m.at("mode").get<std::string>());
    c.checkpoint_every = m.at("checkpoint_every").get<std::size_t>();
    const json& p = m.at("paths");
    c.paths = {p.at("features").get<std::string>(), p.at("planes").get<std::string>(),
               p.at("checkpoints").get<std::string>(), p.at("scenes").get<std::string>()};
    const json& cl = m.at("clips");
    c.clips.tags = tags_from(cl.at("tags"), "clips");
    c.clips.speakers = cl.at("speakers").get<std::size_t>();
    c.clips.clips_per_speaker = cl.at("clips_per_speaker").get<std::size_t>();
    c.clips.frames = cl.at("frames").get<std::size_t>();
    c.clips.heldout_frames = cl.at("heldout_frames").get<std::size_t>();
    c.clips.variation = cl.at("variation").get<double>();
    const json& pl = m.at("planes");
    c.planes.lambda_reg = pl.at("lambda_reg").get<double>();
    c.planes.epochs = pl.at("epochs").get<std::size_t>();
    c.planes.bias_feature = pl.at("bias_feature").get<double>();
    c.planes.average = pl.at("average").get<bool>();
    c.planes.mar_bins = pl.at("mar_bins").get<std::size_t>();
    c.planes.balance = pl.at("balance").get<bool>();
    const json& a = m.at("audio2exp");
    c.audio2exp.model.d = a.at("d").get<std::size_t>();
    c.audio2exp.model.d_h = a.at("d_h").get<std::size_t>();
    c.audio2exp.model.window = a.at("n").get<std::size_t>();
    c.audio2exp.model.ffn_hidden = a.at("ffn_hidden").get<std::vector<std::size_t>>();
    c.audio2exp.rho = a.at("rho").get<double>();
    c.audio2exp.lr = a.at("lr").get<double>();
    c.audio2exp.iterations = a.at("iters").get<std::size_t>();
    c.audio2exp.batch = a.at("batch").get<std::size_t>();
    c.audio2exp.regression_only = a.at("regression_only").get<bool>();
    c.audio2exp.use_refinement = a.at("use_refinement").get<bool>();
    c.audio2exp.allow_single_speaker = a.at("allow_single_speaker").get<bool>();
    const json& s = m.at("scene");
    c.scene.width = s.at("width").get<std::size_t>();
    c.scene.height = s.at("height").get<std::size_t>();
    c.scene.poses = s.at("poses").get<std::size_t>();
    c.scene.orbit_radius = s.at("orbit_radius").get<double>();
    c.scene.elevation_deg = s.at("elevation_deg").get<double>();
    c.scene.focal = s.at("focal").get<double>();
    c.scene.tags = tags_from(s.at("tags"), "scene");
    c.scene.oracle_quad = s.at("oracle_quad").get<std::size_t>();
    const json& r = m.at("renderer");
    c.renderer.field = renderfield::field_config_from_json(r.at("field"));
    c.renderer.samples = r.at("samples").get<std::size_t>();
    c.renderer.stratified = r.at("stratified").get<bool>();
    c.renderer.schedule.total_iters = r.at("iters").get<std::size_t>();
    c.renderer.schedule.lr = r.at("lr").get<double>();
    c.renderer.schedule.rays_per_batch = r.at("rays_per_batch").get<std::size_t>();
    c.renderer.refine_resolution = r.at("refine_resolution").get<std::size_t>();
    c.renderer.weights = training::loss_weights_from_json(r.at("loss_weights"));
    const json& rd = m.at("render");
    c.render.samples = rd.at("samples").get<std::size_t>();
    c.render.threads = rd.at("threads").get<std::size_t>();
    c.render.resolution = rd.at("resolution").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.render.threads == 0 || c.render.resolution == 0) throw ConfigError("config: render threads and resolution must be positive");
  c.sync();
  return c;
}

ProjectConfig load_project_config(const fs::path& path, const ProjectConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return project_config_from_json(j, base);
}

std::vector<std::string> config_keys(const ProjectConfig& c) {
  std::vector<std::string> out;
  collect_keys(to_json(c), "", out);
  return out;
}

ProjectConfig apply_overrides(const ProjectConfig& base, const std::map<std::string, std::string>& overrides) {
  json patch = json::object();
  for (const auto& [key, text] : overrides) {
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;
    }
    json* node = &patch;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
    (*node)[parts.back()] = value;
  }
  // Strings that look like numbers are still strings where the slot wants one (paths, mode).
  json defaults = to_json(base);
  std::vector<std::string> keys;
  collect_keys(patch, "", keys);
  for (const std::string& k : keys) {
    const json::json_pointer ptr("/" + [&] {
      std::string s = k;
      for (char& ch : s) ch = ch == '.' ? '/' : ch;
      return s;
    }());
    if (defaults.contains(ptr) && defaults.at(ptr).is_string() && !patch.at(ptr).is_string()) {
      patch[ptr] = overrides.at(k);
    }
  }
  return project_config_from_json(patch, base);
}

}  // namespace emohead::serve
