#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emohead/numerics/mlp.hpp"
#include "emohead/numerics/params.hpp"
#include "emohead/numerics/tape.hpp"
#include "emohead/numerics/tensor.hpp"
#include "emohead/renderfield/camera.hpp"

namespace emohead::renderfield {

using numerics::Mlp;
using numerics::MlpVars;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

/// [sin(2⁰πv_0), cos(2⁰πv_0), sin(2⁰πv_1), …, cos(2^{L−1}πv_{k−1})]: for each
/// frequency, each component contributes a sin/cos pair. Length k·2L.
std::vector<double> positional_encoding(std::span<const double> v, std::size_t levels);
/// Row-wise encoding of an n×k tensor into `out` (n×2kL) starting at column `col`.
void positional_encoding_rows(const Tensor& v, std::size_t levels, Tensor& out, std::size_t col = 0);

struct FieldConfig {
  std::size_t pos_levels = 10;  // L1
  std::size_t dir_levels = 4;   // L2
  std::size_t cond_dim = 10;    // α̂ width; 11 for the [z; α̃] ablation
  std::size_t trunk_width = 64;
  std::size_t trunk_depth = 3;
  std::size_t color_width = 64;
  std::size_t color_depth = 1;

  std::size_t pos_width() const { return 6 * pos_levels; }
  std::size_t dir_width() const { return 6 * dir_levels; }
};

nlohmann::json to_json(const FieldConfig& c);
FieldConfig field_config_from_json(const nlohmann::json& j);

/// θ: (α̂, d, x) → (c, σ). The trunk reads [PE(x); α̂]; density is softplus of a
/// linear read of the trunk; colour is a sigmoid head on [trunk; PE(d); α̂].
/// Viewing direction never reaches the density path.
struct RadianceField {
  FieldConfig config;
  Mlp trunk;    // tanh after every layer
  Mlp density;  // trunk_width → 1
  Mlp color;    // trunk_width + dir_width + cond_dim → color_width… → 3

  static RadianceField init(const FieldConfig& config, std::uint64_t seed);
  static RadianceField zeros(const FieldConfig& config);
  numerics::ParamList parameters();
  numerics::ConstParamList parameters() const;
};

struct FieldSample {
  Vec3 rgb{};
  double sigma = 0.0;
};

/// Single-point evaluation. Throws DimensionError if alpha_hat has the wrong width.
FieldSample field_eval(const RadianceField& field, std::span<const double> alpha_hat, const Vec3& d, const Vec3& x);

/// Tape-free batch: rows of encoded positions, encoded directions and conditioning.
struct FieldBatch {
  Tensor sigma;  // n×1
  Tensor rgb;    // n×3
};
FieldBatch field_eval_batch(const RadianceField& field, const Tensor& pe_x, const Tensor& pe_d, const Tensor& cond);

struct FieldVars {
  const FieldConfig* config = nullptr;
  MlpVars trunk, density, color;
  std::vector<Var> leaves;  // parameters() order
};

FieldVars bind(Tape& tape, const RadianceField& field, bool trainable = true);
FieldVars bind(const RadianceField& field, std::span<const Var> leaves);

struct FieldOutputVars {
  Var sigma;  // n×1
  Var rgb;    // n×3
};
FieldOutputVars field_forward(const FieldVars& f, Var pe_x, Var pe_d, Var cond);

void save_field(const std::filesystem::path& path, const RadianceField& field,
                const nlohmann::json& extra_meta = nlohmann::json::object());
RadianceField load_field(const std::filesystem::path& path);
std::string encode_field(const RadianceField& field, const nlohmann::json& extra_meta = nlohmann::json::object());

}  // namespace emohead::renderfield
