#include "emohead/renderfield/render.hpp"

#include <cmath>
#include <thread>

#include "emohead/numerics/errors.hpp"
#include "emohead/numerics/random.hpp"

namespace emohead::renderfield {

namespace num = emohead::numerics;
using nlohmann::json;

namespace {

constexpr std::uint64_t kPixelStream = 51;

}  // namespace

void RenderConfig::validate() const {
  if (samples < 2) throw ConfigError("render: samples per ray must be at least 2");
  if (width == 0 || height == 0) throw ConfigError("render: resolution must be positive");
  if (!(t_near >= 0.0 && t_near < t_far)) throw ConfigError("render: need 0 <= t_near < t_far");
  if (threads == 0) throw ConfigError("render: threads must be at least 1");
}

json to_json(const RenderConfig& c) {
  return {{"samples", c.samples}, {"stratified", c.stratified}, {"background", c.background},
          {"width", c.width},     {"height", c.height},         {"t_near", c.t_near},
          {"t_far", c.t_far},     {"seed", c.seed},             {"threads", c.threads}};
}

RenderConfig render_config_from_json(const json& j) {
  RenderConfig c;
  c.samples = j.value("samples", c.samples);
  c.stratified = j.value("stratified", c.stratified);
  c.background = j.value("background", c.background);
  c.width = j.value("width", c.width);
  c.height = j.value("height", c.height);
  c.t_near = j.value("t_near", c.t_near);
  c.t_far = j.value("t_far", c.t_far);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  c.validate();
  return c;
}

void AnalyticField::eval_ray(const Ray& ray, std::span<const double> ts, std::span<double> sigma,
                             std::span<Vec3> rgb) const {
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const Vec3 x = ray.at(ts[i]);
    sigma[i] = density(x);
    rgb[i] = color(x, ray.direction);
  }
}

NeuralField::NeuralField(const RadianceField& params, std::span<const double> cond)
    : params_(params), cond_row_({1, cond.size()}, {cond.begin(), cond.end()}) {
  if (cond.size() != params.config.cond_dim) {
    throw DimensionError("NeuralField: conditioning has " + std::to_string(cond.size()) + " values, field expects " +
                         std::to_string(params.config.cond_dim));
  }
}

void NeuralField::eval_ray(const Ray& ray, std::span<const double> ts, std::span<double> sigma,
                           std::span<Vec3> rgb) const {
  const std::size_t n = ts.size();
  const FieldConfig& c = params_.config;
  Tensor xs({n, 3}), pe_x({n, c.pos_width()}), pe_d({n, c.dir_width()}), cond({n, c.cond_dim});
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 x = ray.at(ts[i]);
    for (std::size_t k = 0; k < 3; ++k) xs.at(i, k) = x[k];
  }
  positional_encoding_rows(xs, c.pos_levels, pe_x);
  const auto pd = positional_encoding(ray.direction, c.dir_levels);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(pd.begin(), pd.end(), pe_d.data() + i * pd.size());
    std::copy(cond_row_.data(), cond_row_.data() + c.cond_dim, cond.data() + i * c.cond_dim);
  }
  const FieldBatch b = field_eval_batch(params_, pe_x, pe_d, cond);
  for (std::size_t i = 0; i < n; ++i) {
    sigma[i] = b.sigma[i];
    rgb[i] = {b.rgb.at(i, 0), b.rgb.at(i, 1), b.rgb.at(i, 2)};
  }
}

double stratum_width(const Ray& ray, const RenderConfig& cfg) {
  return (ray.t_far - ray.t_near) / static_cast<double>(cfg.samples);
}

std::vector<double> sample_depths(const Ray& ray, const RenderConfig& cfg, std::uint64_t seed) {
  const double w = stratum_width(ray, cfg);
  std::vector<double> ts(cfg.samples);
  num::Rng rng(seed);
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    const double u = cfg.stratified ? num::uniform01(rng) : 0.5;
    ts[i] = ray.t_near + (static_cast<double>(i) + u) * w;
  }
  return ts;
}

Composite composite(std::span<const double> sigma, std::span<const Vec3> rgb, std::span<const double> deltas,
                    const Vec3& background) {
  const std::size_t n = sigma.size();
  if (rgb.size() != n || deltas.size() != n) throw DimensionError("composite: sample arrays differ in length");
  Composite out;
  out.weights.resize(n);
  out.transmittance.resize(n + 1);
  double t = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.transmittance[i] = t;
    const double a = -std::expm1(-sigma[i] * deltas[i]);
    out.weights[i] = t * a;
    for (std::size_t k = 0; k < 3; ++k) out.rgb[k] += out.weights[i] * rgb[i][k];
    t *= 1.0 - a;
  }
  out.transmittance[n] = t;
  for (std::size_t k = 0; k < 3; ++k) out.rgb[k] += t * background[k];
  return out;
}

Vec3 render_ray(const Field& field, const Ray& ray, const RenderConfig& cfg, std::uint64_t ray_seed) {
  const std::vector<double> ts = sample_depths(ray, cfg, ray_seed);
  std::vector<double> sigma(ts.size());
  std::vector<Vec3> rgb(ts.size());
  field.eval_ray(ray, ts, sigma, rgb);
  const std::vector<double> deltas(ts.size(), stratum_width(ray, cfg));
  return composite(sigma, rgb, deltas, cfg.background).rgb;
}

Vec3 render_ray(const RadianceField& params, std::span<const double> alpha_hat, const Ray& ray, const RenderConfig& cfg,
                std::uint64_t ray_seed) {
  return render_ray(NeuralField(params, alpha_hat), ray, cfg, ray_seed);
}

std::uint64_t pixel_seed(const RenderConfig& cfg, std::size_t u, std::size_t v) {
  return num::derive_seed(cfg.seed, kPixelStream, v * cfg.width + u);
}

Image render_frame(const Field& field, const CameraPose& pose, const RenderConfig& cfg) {
  cfg.validate();
  pose.validate();
  CameraPose p = pose;
  p.intrinsics = pose.intrinsics.resized(cfg.width, cfg.height);
  Image img(cfg.width, cfg.height);
  auto rows = [&](std::size_t begin, std::size_t end) {
    for (std::size_t v = begin; v < end; ++v) {
      for (std::size_t u = 0; u < cfg.width; ++u) {
        const Vec3 c = render_ray(field, generate_ray(p, u, v, cfg.t_near, cfg.t_far), cfg, pixel_seed(cfg, u, v));
        for (std::size_t k = 0; k < 3; ++k) img.at(u, v, k) = c[k];
      }
    }
  };
  const std::size_t workers = std::min(cfg.threads, cfg.height);
  if (workers <= 1) {
    rows(0, cfg.height);
    return img;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (cfg.height + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t b = w * chunk, e = std::min(cfg.height, b + chunk);
    if (b < e) pool.emplace_back(rows, b, e);
  }
  for (auto& t : pool) t.join();
  return img;
}

Image render_frame(const RadianceField& params, const CameraPose& pose, std::span<const double> alpha_hat,
                   const RenderConfig& cfg) {
  return render_frame(NeuralField(params, alpha_hat), pose, cfg);
}

Vec3 oracle_render_ray(const AnalyticField& field, const Ray& ray, std::size_t n_quad, const Vec3& background) {
  if (n_quad == 0) throw ConfigError("oracle_render_ray: n_quad must be positive");
  const double h = (ray.t_far - ray.t_near) / static_cast<double>(n_quad);
  double optical = 0.0;  // ∫σ up to the start of the current cell
  Vec3 c{0, 0, 0};
  for (std::size_t k = 0; k < n_quad; ++k) {
    const Vec3 x = ray.at(ray.t_near + (static_cast<double>(k) + 0.5) * h);
    const double s = field.density(x);
    const double t = std::exp(-(optical + 0.5 * s * h));
    const Vec3 col = field.color(x, ray.direction);
    for (std::size_t i = 0; i < 3; ++i) c[i] += t * s * col[i] * h;
    optical += s * h;
  }
  const double leftover = std::exp(-optical);
  for (std::size_t i = 0; i < 3; ++i) c[i] += leftover * background[i];
  return c;
}

RaySamples sample_rays(std::span<const Ray> rays, const Tensor& cond, std::span<const std::uint64_t> seeds,
                       const FieldConfig& field, const RenderConfig& cfg) {
  const std::size_t r = rays.size(), n = cfg.samples;
  if (r == 0) throw ConfigError("sample_rays: empty ray batch");
  if (seeds.size() != r || cond.rows() != r || cond.cols() != field.cond_dim) {
    throw DimensionError("sample_rays: seeds and conditioning need one row per ray");
  }
  RaySamples s;
  s.rays = r;
  s.samples = n;
  Tensor xs({r * n, 3});
  s.pe_d = Tensor({r * n, field.dir_width()});
  s.cond = Tensor({r * n, field.cond_dim});
  s.deltas = Tensor({r, n});
  for (std::size_t i = 0; i < r; ++i) {
    const std::vector<double> ts = sample_depths(rays[i], cfg, seeds[i]);
    const double w = stratum_width(rays[i], cfg);
    const auto pd = positional_encoding(rays[i].direction, field.dir_levels);
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t row = i * n + j;
      const Vec3 x = rays[i].at(ts[j]);
      for (std::size_t k = 0; k < 3; ++k) xs.at(row, k) = x[k];
      std::copy(pd.begin(), pd.end(), s.pe_d.data() + row * pd.size());
      std::copy(cond.data() + i * field.cond_dim, cond.data() + (i + 1) * field.cond_dim,
                s.cond.data() + row * field.cond_dim);
      s.deltas.at(i, j) = w;
    }
  }
  s.pe_x = Tensor({r * n, field.pos_width()});
  positional_encoding_rows(xs, field.pos_levels, s.pe_x);
  return s;
}

Var volume_composite(Var sigma, Var rgb, const Tensor& deltas, const Vec3& background) {
  const std::size_t r = deltas.rows(), n = deltas.cols();
  const Tensor& sv = sigma.value();
  const Tensor& cv = rgb.value();
  if (sv.rows() != r * n || sv.cols() != 1 || cv.rows() != r * n || cv.cols() != 3) {
    throw DimensionError("volume_composite: expected " + std::to_string(r * n) + " samples");
  }
  if (&sigma.tape() != &rgb.tape()) throw std::logic_error("volume_composite: operands on different tapes");
  Tensor out({r, 3});
  for (std::size_t i = 0; i < r; ++i) {
    double t = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t row = i * n + j;
      const double a = -std::expm1(-sv[row] * deltas.at(i, j));
      for (std::size_t k = 0; k < 3; ++k) out.at(i, k) += t * a * cv.at(row, k);
      t *= 1.0 - a;
    }
    for (std::size_t k = 0; k < 3; ++k) out.at(i, k) += t * background[k];
  }
  const std::size_t is = sigma.id(), ic = rgb.id();
  const bool need = sigma.requires_grad() || rgb.requires_grad();
  return sigma.tape().record(std::move(out), need, [is, ic, deltas, background, r, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& s = tp.value(is);
    const Tensor& c = tp.value(ic);
    const bool want_s = tp.requires_grad(is), want_c = tp.requires_grad(ic);
    Tensor* gs = want_s ? &tp.grad_buffer(is) : nullptr;
    Tensor* gc = want_c ? &tp.grad_buffer(ic) : nullptr;
    std::vector<double> trans(n + 1), w(n), cg(n);
    for (std::size_t i = 0; i < r; ++i) {
      const double g0 = g.at(i, 0), g1 = g.at(i, 1), g2 = g.at(i, 2);
      double t = 1.0;
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t row = i * n + j;
        const double a = -std::expm1(-s[row] * deltas.at(i, j));
        trans[j] = t;
        w[j] = t * a;
        cg[j] = c.at(row, 0) * g0 + c.at(row, 1) * g1 + c.at(row, 2) * g2;
        if (gc) {
          gc->at(row, 0) += w[j] * g0;
          gc->at(row, 1) += w[j] * g1;
          gc->at(row, 2) += w[j] * g2;
        }
        t *= 1.0 - a;
      }
      trans[n] = t;
      if (!gs) continue;
      // ∂C/∂σ_j = δ_j (T_{j+1} c_j − Σ_{k>j} w_k c_k − T_{N+1} bg), contracted with g.
      double tail = trans[n] * (background[0] * g0 + background[1] * g1 + background[2] * g2);
      for (std::size_t jj = n; jj-- > 0;) {
        const std::size_t row = i * n + jj;
        (*gs)[row] += deltas.at(i, jj) * (trans[jj + 1] * cg[jj] - tail);
        tail += w[jj] * cg[jj];
      }
    }
  });
}

Var render_rays(const FieldVars& field, const RaySamples& samples, const Vec3& background, Var cond) {
  Tape& tape = field.leaves.front().tape();
  const Var c = cond.valid() ? cond : tape.constant(samples.cond);
  const FieldOutputVars out = field_forward(field, tape.constant(samples.pe_x), tape.constant(samples.pe_d), c);
  return volume_composite(out.sigma, out.rgb, samples.deltas, background);
}

}  // namespace emohead::renderfield
