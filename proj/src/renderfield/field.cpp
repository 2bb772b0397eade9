#include "emohead/renderfield/field.hpp"

#include <cmath>
#include <numbers>

#include "emohead/numerics/checkpoint.hpp"
#include "emohead/numerics/errors.hpp"
#include "emohead/numerics/ops.hpp"
#include "emohead/numerics/random.hpp"

namespace emohead::renderfield {

namespace num = emohead::numerics;
using nlohmann::json;

namespace {

constexpr std::uint64_t kFieldInitStream = 41;

struct Widths {
  std::vector<std::size_t> trunk, density, color;
};

Widths widths(const FieldConfig& c) {
  if (c.trunk_depth == 0 || c.color_depth == 0 || c.trunk_width == 0 || c.color_width == 0) {
    throw ConfigError("field: depths and widths must be positive");
  }
  if (c.pos_levels == 0 || c.dir_levels == 0 || c.cond_dim == 0) {
    throw ConfigError("field: encoding levels and conditioning width must be positive");
  }
  Widths w;
  w.trunk.push_back(c.pos_width() + c.cond_dim);
  w.trunk.insert(w.trunk.end(), c.trunk_depth, c.trunk_width);
  w.density = {c.trunk_width, 1};
  w.color.push_back(c.trunk_width + c.dir_width() + c.cond_dim);
  w.color.insert(w.color.end(), c.color_depth, c.color_width);
  w.color.push_back(3);
  return w;
}

Tensor concat3(const Tensor& a, const Tensor& b, const Tensor& c) {
  const std::size_t n = a.rows();
  Tensor out({n, a.cols() + b.cols() + c.cols()});
  for (std::size_t r = 0; r < n; ++r) {
    double* dst = out.data() + r * out.cols();
    dst = std::copy(a.data() + r * a.cols(), a.data() + (r + 1) * a.cols(), dst);
    dst = std::copy(b.data() + r * b.cols(), b.data() + (r + 1) * b.cols(), dst);
    std::copy(c.data() + r * c.cols(), c.data() + (r + 1) * c.cols(), dst);
  }
  return out;
}

Tensor concat2(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows();
  Tensor out({n, a.cols() + b.cols()});
  for (std::size_t r = 0; r < n; ++r) {
    double* dst = std::copy(a.data() + r * a.cols(), a.data() + (r + 1) * a.cols(), out.data() + r * out.cols());
    std::copy(b.data() + r * b.cols(), b.data() + (r + 1) * b.cols(), dst);
  }
  return out;
}

}  // namespace

namespace {

// Level l+1 from level l by the double-angle identities; one sin/cos per value.
void encode_value(double x, std::size_t levels, double* dst, std::size_t stride) {
  double s = std::sin(std::numbers::pi * x), c = std::cos(std::numbers::pi * x);
  for (std::size_t l = 0; l < levels; ++l) {
    dst[l * stride] = s;
    dst[l * stride + 1] = c;
    const double s2 = 2.0 * s * c;
    c = (c - s) * (c + s);
    s = s2;
  }
}

}  // namespace

std::vector<double> positional_encoding(std::span<const double> v, std::size_t levels) {
  std::vector<double> out(v.size() * 2 * levels);
  for (std::size_t i = 0; i < v.size(); ++i) encode_value(v[i], levels, out.data() + 2 * i, 2 * v.size());
  return out;
}

void positional_encoding_rows(const Tensor& v, std::size_t levels, Tensor& out, std::size_t col) {
  const std::size_t k = v.cols();
  if (out.rows() != v.rows() || out.cols() < col + 2 * k * levels) {
    throw DimensionError("positional_encoding_rows: output too small");
  }
  for (std::size_t r = 0; r < v.rows(); ++r) {
    double* dst = out.data() + r * out.cols() + col;
    for (std::size_t i = 0; i < k; ++i) encode_value(v.at(r, i), levels, dst + 2 * i, 2 * k);
  }
}

json to_json(const FieldConfig& c) {
  return {{"pos_levels", c.pos_levels},   {"dir_levels", c.dir_levels},   {"cond_dim", c.cond_dim},
          {"trunk_width", c.trunk_width}, {"trunk_depth", c.trunk_depth}, {"color_width", c.color_width},
          {"color_depth", c.color_depth}};
}

FieldConfig field_config_from_json(const json& j) {
  FieldConfig c;
  c.pos_levels = j.value("pos_levels", c.pos_levels);
  c.dir_levels = j.value("dir_levels", c.dir_levels);
  c.cond_dim = j.value("cond_dim", c.cond_dim);
  c.trunk_width = j.value("trunk_width", c.trunk_width);
  c.trunk_depth = j.value("trunk_depth", c.trunk_depth);
  c.color_width = j.value("color_width", c.color_width);
  c.color_depth = j.value("color_depth", c.color_depth);
  return c;
}

RadianceField RadianceField::init(const FieldConfig& config, std::uint64_t seed) {
  const Widths w = widths(config);
  num::Rng rng(num::derive_seed(seed, kFieldInitStream));
  RadianceField f;
  f.config = config;
  f.trunk = Mlp::init(w.trunk, rng, true);
  f.density = Mlp::init(w.density, rng);
  f.color = Mlp::init(w.color, rng);
  return f;
}

RadianceField RadianceField::zeros(const FieldConfig& config) {
  const Widths w = widths(config);
  RadianceField f;
  f.config = config;
  f.trunk = Mlp::zeros(w.trunk, true);
  f.density = Mlp::zeros(w.density);
  f.color = Mlp::zeros(w.color);
  return f;
}

num::ParamList RadianceField::parameters() {
  num::ParamList out;
  trunk.collect("trunk", out);
  density.collect("density", out);
  color.collect("color", out);
  return out;
}

num::ConstParamList RadianceField::parameters() const {
  return num::const_params(const_cast<RadianceField*>(this)->parameters());
}

FieldBatch field_eval_batch(const RadianceField& field, const Tensor& pe_x, const Tensor& pe_d, const Tensor& cond) {
  const FieldConfig& c = field.config;
  if (pe_x.cols() != c.pos_width() || pe_d.cols() != c.dir_width() || cond.cols() != c.cond_dim ||
      pe_d.rows() != pe_x.rows() || cond.rows() != pe_x.rows()) {
    throw DimensionError("field_eval_batch: input widths do not match the field config");
  }
  const Tensor h = num::mlp_apply(field.trunk, concat2(pe_x, cond));
  FieldBatch out;
  out.sigma = num::mlp_apply(field.density, h);
  for (double& v : out.sigma.values()) v = num::softplus(v);
  out.rgb = num::mlp_apply(field.color, concat3(h, pe_d, cond));
  for (double& v : out.rgb.values()) v = num::sigmoid(v);
  return out;
}

FieldSample field_eval(const RadianceField& field, std::span<const double> alpha_hat, const Vec3& d, const Vec3& x) {
  if (alpha_hat.size() != field.config.cond_dim) {
    throw DimensionError("field_eval: conditioning has " + std::to_string(alpha_hat.size()) + " values, field expects " +
                         std::to_string(field.config.cond_dim));
  }
  const auto px = positional_encoding(x, field.config.pos_levels);
  const auto pd = positional_encoding(d, field.config.dir_levels);
  const Tensor pe_x({1, px.size()}, px);
  const Tensor pe_d({1, pd.size()}, pd);
  const Tensor cond({1, alpha_hat.size()}, {alpha_hat.begin(), alpha_hat.end()});
  const FieldBatch b = field_eval_batch(field, pe_x, pe_d, cond);
  return {{b.rgb[0], b.rgb[1], b.rgb[2]}, b.sigma[0]};
}

FieldVars bind(const RadianceField& field, std::span<const Var> leaves) {
  const std::size_t expected = field.parameters().size();
  if (leaves.size() != expected) {
    throw DimensionError("field bind: " + std::to_string(leaves.size()) + " vars for " + std::to_string(expected) +
                         " parameters");
  }
  FieldVars v;
  v.config = &field.config;
  v.leaves.assign(leaves.begin(), leaves.end());
  std::size_t i = 0;
  for (auto [mlp, vars] : {std::pair{&field.trunk, &v.trunk}, std::pair{&field.density, &v.density},
                           std::pair{&field.color, &v.color}}) {
    vars->tanh_output = mlp->tanh_output;
    for (std::size_t l = 0; l < mlp->layers(); ++l) {
      vars->weights.push_back(leaves[i++]);
      vars->biases.push_back(leaves[i++]);
    }
  }
  return v;
}

FieldVars bind(Tape& tape, const RadianceField& field, bool trainable) {
  std::vector<Var> leaves;
  for (const auto& [name, t] : field.parameters()) leaves.push_back(trainable ? tape.leaf(*t) : tape.constant(*t));
  return renderfield::bind(field, leaves);
}

FieldOutputVars field_forward(const FieldVars& f, Var pe_x, Var pe_d, Var cond) {
  const Var trunk_in[] = {pe_x, cond};
  const Var h = num::mlp_apply(f.trunk, num::concat_cols(trunk_in));
  FieldOutputVars out;
  out.sigma = num::softplus(num::mlp_apply(f.density, h));
  const Var color_in[] = {h, pe_d, cond};
  out.rgb = num::sigmoid(num::mlp_apply(f.color, num::concat_cols(color_in)));
  return out;
}

std::string encode_field(const RadianceField& field, const json& extra_meta) {
  json meta = extra_meta;
  meta["kind"] = "radiance_field";
  meta["config"] = to_json(field.config);
  return num::encode_checkpoint(field.parameters(), meta);
}

void save_field(const std::filesystem::path& path, const RadianceField& field, const json& extra_meta) {
  num::write_bytes(path, encode_field(field, extra_meta));
}

RadianceField load_field(const std::filesystem::path& path) {
  const num::Checkpoint ckpt = num::load_checkpoint(path);
  if (ckpt.meta.value("kind", "") != "radiance_field") throw LoadError(path.string() + ": not a radiance field checkpoint");
  RadianceField f = RadianceField::zeros(field_config_from_json(ckpt.meta.at("config")));
  num::assign_parameters(ckpt, f.parameters());
  return f;
}

}  // namespace emohead::renderfield
