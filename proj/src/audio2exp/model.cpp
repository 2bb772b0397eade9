#include <cmath>

#include "emohead/audio2exp/audio2exp.hpp"
#include "emohead/numerics/checkpoint.hpp"
#include "emohead/numerics/errors.hpp"
#include "emohead/numerics/ops.hpp"
#include "emohead/numerics/random.hpp"

namespace emohead::audio2exp {

namespace num = emohead::numerics;
using features::kAudioDim;
using features::kEmotionDim;
using features::kTextDim;
using nlohmann::json;

namespace {

constexpr std::uint64_t kInitStream = 21;

std::vector<std::size_t> ffn_widths(const AlignmentConfig& c, std::size_t out) {
  std::vector<std::size_t> w{3 * c.d};
  w.insert(w.end(), c.ffn_hidden.begin(), c.ffn_hidden.end());
  w.push_back(out);
  return w;
}

// Small tape-free helpers for the inference path.
Tensor add_t(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor scale_t(Tensor a, double f) {
  for (double& v : a.values()) v *= f;
  return a;
}

Tensor transpose_t(const Tensor& a) {
  Tensor out({a.cols(), a.rows()});
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) out.at(c, r) = a.at(r, c);
  }
  return out;
}

Tensor last_row(const Tensor& a) {
  Tensor out({1, a.cols()});
  const std::size_t r = a.rows() - 1;
  for (std::size_t c = 0; c < a.cols(); ++c) out[c] = a.at(r, c);
  return out;
}

Tensor concat_cols_t(std::initializer_list<const Tensor*> parts) {
  std::size_t cols = 0;
  for (const Tensor* p : parts) cols += p->cols();
  const std::size_t rows = (*parts.begin())->rows();
  Tensor out({rows, cols});
  std::size_t off = 0;
  for (const Tensor* p : parts) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < p->cols(); ++c) out.at(r, off + c) = p->at(r, c);
    }
    off += p->cols();
  }
  return out;
}

Tensor attend(const Tensor& logits, double inv_sqrt, const Tensor& values) {
  return num::matmul(num::softmax_rows(scale_t(logits, inv_sqrt)), values);
}

Tensor row_of(const std::vector<double>& v) { return Tensor({1, v.size()}, v); }

}  // namespace

json to_json(const AlignmentConfig& c) {
  return {{"d", c.d}, {"d_h", c.d_h}, {"window", c.window}, {"ffn_hidden", c.ffn_hidden}, {"no_alignment", c.no_alignment}};
}

AlignmentConfig alignment_config_from_json(const json& j) {
  AlignmentConfig c;
  c.d = j.value("d", c.d);
  c.d_h = j.value("d_h", c.d_h);
  c.window = j.value("window", c.window);
  c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
  c.no_alignment = j.value("no_alignment", c.no_alignment);
  return c;
}

AlignmentParams AlignmentParams::init(const AlignmentConfig& config, std::uint64_t seed) {
  if (config.d == 0 || config.d_h == 0) throw ConfigError("audio2exp: d and d_h must be positive");
  num::Rng rng(num::derive_seed(seed, kInitStream));
  AlignmentParams p;
  p.config = config;
  const std::size_t d = config.d, dh = config.d_h;
  p.e1 = num::uniform_fan_in(kAudioDim, d, rng);
  p.e2 = num::uniform_fan_in(kEmotionDim, d, rng);
  p.e3 = num::uniform_fan_in(kTextDim, d, rng);
  if (config.no_alignment) {
    p.wq = num::uniform_fan_in(3 * d, dh, rng);
    p.wk = num::uniform_fan_in(3 * d, dh, rng);
    p.wv = num::uniform_fan_in(3 * d, 3 * d, rng);
  } else {
    p.wq1 = num::uniform_fan_in(d, dh, rng);
    p.wk1 = num::uniform_fan_in(d, dh, rng);
    p.wv1 = num::uniform_fan_in(d, d, rng);
    p.wq2 = num::uniform_fan_in(d, dh, rng);
    p.wk2 = num::uniform_fan_in(d, dh, rng);
    p.wv2 = num::uniform_fan_in(d, d, rng);
    p.wv3 = num::uniform_fan_in(d, d, rng);
  }
  const auto w1 = ffn_widths(config, kExpressionDim);
  const auto w2 = ffn_widths(config, 1);
  p.ffn1 = Mlp::init(w1, rng);
  p.ffn2 = Mlp::init(w2, rng);
  return p;
}

num::ParamList AlignmentParams::parameters() {
  num::ParamList out{{"e1", &e1}, {"e2", &e2}, {"e3", &e3}};
  if (config.no_alignment) {
    out.insert(out.end(), {{"wq", &wq}, {"wk", &wk}, {"wv", &wv}});
  } else {
    out.insert(out.end(), {{"wq1", &wq1}, {"wk1", &wk1}, {"wv1", &wv1}, {"wq2", &wq2}, {"wk2", &wk2},
                           {"wv2", &wv2}, {"wv3", &wv3}});
  }
  ffn1.collect("ffn1", out);
  ffn2.collect("ffn2", out);
  return out;
}

num::ConstParamList AlignmentParams::parameters() const {
  return num::const_params(const_cast<AlignmentParams*>(this)->parameters());
}

Projection project_features(const features::FeatureFrame& frame, const AlignmentParams& params) {
  if (frame.audio.size() != kAudioDim || frame.emotion.size() != kEmotionDim || frame.text.size() != kTextDim) {
    throw DimensionError("project_features: frame " + std::to_string(frame.index) + " has wrong feature dims");
  }
  return {num::matmul(row_of(frame.audio), params.e1), num::matmul(row_of(frame.emotion), params.e2),
          num::matmul(row_of(frame.text), params.e3)};
}

WindowFeatures gather_window(const features::Window& w) {
  const std::size_t n = w.rows.size();
  WindowFeatures out{Tensor({n, kAudioDim}), Tensor({n, kEmotionDim}), Tensor({n, kTextDim})};
  for (std::size_t r = 0; r < n; ++r) {
    const features::FeatureFrame& f = *w.rows[r];
    if (f.audio.size() != kAudioDim || f.emotion.size() != kEmotionDim || f.text.size() != kTextDim) {
      throw DimensionError("gather_window: row " + std::to_string(r) + " has wrong feature dims");
    }
    std::copy(f.audio.begin(), f.audio.end(), out.audio.data() + r * kAudioDim);
    std::copy(f.emotion.begin(), f.emotion.end(), out.emotion.data() + r * kEmotionDim);
    std::copy(f.text.begin(), f.text.end(), out.text.data() + r * kTextDim);
  }
  return out;
}

FusedWindow fuse_window(const features::Window& w, const AlignmentParams& params) {
  const WindowFeatures raw = gather_window(w);
  FusedWindow out;
  out.v = num::matmul(raw.audio, params.e1);
  out.e = num::matmul(raw.emotion, params.e2);
  out.s = add_t(out.v, out.e);
  out.gamma = num::matmul(raw.text, params.e3);
  return out;
}

HiddenStates fused_attention(const FusedWindow& fused, const AlignmentParams& params) {
  const AlignmentConfig& c = params.config;
  const double inv = 1.0 / std::sqrt(static_cast<double>(c.d_h));
  HiddenStates h;
  if (c.no_alignment) {
    const Tensor x = concat_cols_t({&fused.v, &fused.e, &fused.gamma});
    const Tensor logits = num::matmul(num::matmul(x, params.wq), transpose_t(num::matmul(x, params.wk)));
    h.h_v = add_t(x, attend(logits, inv, num::matmul(x, params.wv)));
    return h;
  }
  const Tensor c_ve = num::matmul(num::matmul(fused.s, params.wq1), transpose_t(num::matmul(fused.s, params.wk1)));
  const Tensor c_g =
      num::matmul(num::matmul(fused.gamma, params.wq2), transpose_t(num::matmul(fused.gamma, params.wk2)));
  h.h_v = attend(add_t(c_ve, c_g), inv, num::matmul(fused.v, params.wv1));
  h.h_e = attend(c_ve, inv, num::matmul(fused.s, params.wv2));
  h.h_g = attend(c_g, inv, num::matmul(fused.gamma, params.wv3));
  return h;
}

AlignmentOutput predict_expression(const HiddenStates& hidden, const AlignmentParams& params) {
  AlignmentOutput out;
  Tensor row;
  if (params.config.no_alignment) {
    out.h_v = last_row(hidden.h_v);
    row = out.h_v;
  } else {
    out.h_v = last_row(hidden.h_v);
    out.h_e = last_row(hidden.h_e);
    out.h_g = last_row(hidden.h_g);
    row = concat_cols_t({&out.h_v, &out.h_e, &out.h_g});
  }
  const Tensor a = num::mlp_apply(params.ffn1, row);
  const Tensor t = num::mlp_apply(params.ffn2, row);
  for (std::size_t k = 0; k < kExpressionDim; ++k) out.alpha_tilde[k] = a[k];
  out.tau = t.item();
  return out;
}

AlignmentOutput infer(const features::InputClip& clip, std::size_t i, const AlignmentParams& params) {
  const features::Window w = features::window(clip, i, params.config.window);
  return predict_expression(fused_attention(fuse_window(w, params), params), params);
}

ExpressionParams infer_refined(const features::InputClip& clip, std::size_t i, const AlignmentParams& params,
                               const hyperplane::PlaneSet* planes) {
  const AlignmentOutput out = infer(clip, i, params);
  if (planes == nullptr) return out.alpha_tilde;
  const auto it = planes->find(clip.emotion);
  if (it == planes->end()) {
    throw ConfigError("no hyperplane for emotion '" + std::string(to_string(clip.emotion)) + "'");
  }
  return hyperplane::refine(out.alpha_tilde, out.tau, it->second);
}

AlignmentVars bind(const AlignmentParams& params, std::span<const Var> leaves) {
  AlignmentVars v;
  v.config = &params.config;
  v.leaves.assign(leaves.begin(), leaves.end());
  const std::size_t expected = params.parameters().size();
  if (leaves.size() != expected) {
    throw DimensionError("audio2exp bind: " + std::to_string(leaves.size()) + " vars for " +
                         std::to_string(expected) + " parameters");
  }
  std::size_t i = 0;
  v.e1 = leaves[i++];
  v.e2 = leaves[i++];
  v.e3 = leaves[i++];
  if (params.config.no_alignment) {
    v.wq = leaves[i++];
    v.wk = leaves[i++];
    v.wv = leaves[i++];
  } else {
    for (Var* dst : {&v.wq1, &v.wk1, &v.wv1, &v.wq2, &v.wk2, &v.wv2, &v.wv3}) *dst = leaves[i++];
  }
  for (auto [mlp, vars] : {std::pair{&params.ffn1, &v.ffn1}, std::pair{&params.ffn2, &v.ffn2}}) {
    vars->tanh_output = mlp->tanh_output;
    for (std::size_t l = 0; l < mlp->layers(); ++l) {
      vars->weights.push_back(leaves[i++]);
      vars->biases.push_back(leaves[i++]);
    }
  }
  return v;
}

AlignmentVars bind(Tape& tape, const AlignmentParams& params, bool trainable) {
  std::vector<Var> leaves;
  for (const auto& [name, t] : params.parameters()) leaves.push_back(trainable ? tape.leaf(*t) : tape.constant(*t));
  return audio2exp::bind(params, leaves);
}

FusedVars fuse_window(const AlignmentVars& p, Var audio, Var emotion, Var text) {
  FusedVars f;
  f.v = num::matmul(audio, p.e1);
  f.e = num::matmul(emotion, p.e2);
  f.s = num::add(f.v, f.e);
  f.gamma = num::matmul(text, p.e3);
  return f;
}

HiddenVars fused_attention(const AlignmentVars& p, const FusedVars& f) {
  if (p.config->no_alignment) throw ConfigError("fused_attention called on a no_alignment model");
  const double inv = 1.0 / std::sqrt(static_cast<double>(p.config->d_h));
  const Var c_ve = num::matmul(num::matmul(f.s, p.wq1), num::transpose(num::matmul(f.s, p.wk1)));
  const Var c_g = num::matmul(num::matmul(f.gamma, p.wq2), num::transpose(num::matmul(f.gamma, p.wk2)));
  HiddenVars h;
  h.h_v = num::matmul(num::softmax_rows(num::scale(num::add(c_ve, c_g), inv)), num::matmul(f.v, p.wv1));
  h.h_e = num::matmul(num::softmax_rows(num::scale(c_ve, inv)), num::matmul(f.s, p.wv2));
  h.h_g = num::matmul(num::softmax_rows(num::scale(c_g, inv)), num::matmul(f.gamma, p.wv3));
  return h;
}

HiddenVars joint_attention(const AlignmentVars& p, const FusedVars& f) {
  if (!p.config->no_alignment) throw ConfigError("joint_attention needs a no_alignment model");
  const double inv = 1.0 / std::sqrt(static_cast<double>(p.config->d_h));
  const Var parts[] = {f.v, f.e, f.gamma};
  const Var x = num::concat_cols(parts);
  const Var logits = num::matmul(num::matmul(x, p.wq), num::transpose(num::matmul(x, p.wk)));
  HiddenVars h;
  h.joint = num::add(x, num::matmul(num::softmax_rows(num::scale(logits, inv)), num::matmul(x, p.wv)));
  return h;
}

Var readout(const HiddenVars& h) {
  if (h.joint.valid()) return num::slice_rows(h.joint, h.joint.value().rows() - 1, 1);
  const std::size_t last = h.h_v.value().rows() - 1;
  const Var parts[] = {num::slice_rows(h.h_v, last, 1), num::slice_rows(h.h_e, last, 1),
                       num::slice_rows(h.h_g, last, 1)};
  return num::concat_cols(parts);
}

OutputVars predict_expression(const AlignmentVars& p, Var rows) {
  return {num::mlp_apply(p.ffn1, rows), num::mlp_apply(p.ffn2, rows)};
}

double contrastive_loss(const ExpressionParams& alpha_hat, const ExpressionParams& alpha_a,
                        const ExpressionParams& alpha_abar, double rho) {
  if (rho < 0.0) throw ConfigError("contrastive_loss: rho must be non-negative");
  double d1 = 0.0, d2 = 0.0;
  for (std::size_t k = 0; k < kExpressionDim; ++k) {
    d1 += (alpha_a[k] - alpha_hat[k]) * (alpha_a[k] - alpha_hat[k]);
    d2 += (alpha_abar[k] - alpha_hat[k]) * (alpha_abar[k] - alpha_hat[k]);
  }
  return std::sqrt(d1) + rho * std::sqrt(d2);
}

Var contrastive_loss(Var alpha_hat, Var alpha_a, Var alpha_abar, double rho) {
  if (rho < 0.0) throw ConfigError("contrastive_loss: rho must be non-negative");
  Var loss = num::mean(num::row_norms(num::sub(alpha_a, alpha_hat)));
  if (alpha_abar.valid()) {
    loss = num::add(loss, num::scale(num::mean(num::row_norms(num::sub(alpha_abar, alpha_hat))), rho));
  }
  return loss;
}

std::string encode_alignment(const AlignmentParams& params, const json& extra_meta) {
  json meta = extra_meta;
  meta["kind"] = "audio2exp";
  meta["config"] = to_json(params.config);
  return num::encode_checkpoint(params.parameters(), meta);
}

void save_alignment(const std::filesystem::path& path, const AlignmentParams& params, const json& extra_meta) {
  num::write_bytes(path, encode_alignment(params, extra_meta));
}

AlignmentParams load_alignment(const std::filesystem::path& path) {
  const num::Checkpoint ckpt = num::load_checkpoint(path);
  if (ckpt.meta.value("kind", "") != "audio2exp") {
    throw LoadError(path.string() + ": not an audio2exp checkpoint");
  }
  AlignmentParams params = AlignmentParams::init(alignment_config_from_json(ckpt.meta.at("config")), 0);
  num::assign_parameters(ckpt, params.parameters());
  return params;
}

}  // namespace emohead::audio2exp
