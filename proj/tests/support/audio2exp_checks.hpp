#pragma once

// Gradient-fidelity scenarios shared by the unit tests and the acceptance run.

#include <random>
#include <vector>

#include "emohead/audio2exp/audio2exp.hpp"
#include "emohead/features/clip.hpp"
#include "emohead/numerics/grad_check.hpp"
#include "emohead/numerics/ops.hpp"

namespace checks {

namespace a2e = emohead::audio2exp;
namespace num = emohead::numerics;

inline a2e::AlignmentConfig reduced_config(bool no_alignment = false) {
  a2e::AlignmentConfig c;
  c.d = 8;
  c.d_h = 8;
  c.window = 2;
  c.no_alignment = no_alignment;
  return c;
}

inline num::Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  num::Tensor t({r, c});
  for (double& v : t.values()) v = nd(rng);
  return t;
}

/// Small batch of windows with targets, partners and refinement directions.
struct LossFixture {
  std::vector<a2e::WindowFeatures> windows;
  num::Tensor targets, partners, dirs;
};

inline LossFixture make_loss_fixture(std::size_t window, std::size_t batch = 3) {
  LossFixture fx;
  const auto clip = emohead::features::emit_synthetic_clip(77, 6, emohead::Emotion::happy, "spk");
  for (std::size_t k = 0; k < batch; ++k) {
    fx.windows.push_back(a2e::gather_window(emohead::features::window(clip.clip, 1 + k, window)));
  }
  fx.targets = random_tensor(batch, emohead::kExpressionDim, 5);
  fx.partners = random_tensor(batch, emohead::kExpressionDim, 6);
  num::Tensor d = random_tensor(batch, emohead::kExpressionDim, 7);
  for (std::size_t r = 0; r < batch; ++r) {
    double n2 = 0;
    for (std::size_t c = 0; c < emohead::kExpressionDim; ++c) n2 += d.at(r, c) * d.at(r, c);
    for (std::size_t c = 0; c < emohead::kExpressionDim; ++c) d.at(r, c) /= std::sqrt(n2);
  }
  fx.dirs = d;
  return fx;
}

/// Training loss of the alignment module on the fixture, built from `leaves`.
inline num::Var module_loss(const a2e::AlignmentParams& shape, const LossFixture& fx, num::Tape& tape,
                            std::span<const num::Var> leaves, double rho = 0.5) {
  const a2e::AlignmentVars vars = a2e::bind(shape, leaves);
  std::vector<num::Var> rows;
  for (const auto& w : fx.windows) {
    const a2e::FusedVars f =
        a2e::fuse_window(vars, tape.constant(w.audio), tape.constant(w.emotion), tape.constant(w.text));
    rows.push_back(a2e::readout(shape.config.no_alignment ? a2e::joint_attention(vars, f)
                                                          : a2e::fused_attention(vars, f)));
  }
  const a2e::OutputVars out = a2e::predict_expression(vars, num::concat_rows(rows));
  const num::Var hat = num::add(out.alpha_tilde, num::scale_rows(tape.constant(fx.dirs), out.tau));
  return a2e::contrastive_loss(hat, tape.constant(fx.targets), tape.constant(fx.partners), rho);
}

/// Max relative finite-difference error over every parameter tensor of the
/// reduced module (sampled coordinates per tensor).
inline num::GradCheckReport module_gradient_check(bool no_alignment, std::size_t coords_per_tensor,
                                                  std::uint64_t seed = 1) {
  const a2e::AlignmentParams params = a2e::AlignmentParams::init(reduced_config(no_alignment), seed);
  const LossFixture fx = make_loss_fixture(params.config.window);
  std::vector<num::Tensor> inputs;
  for (const auto& [name, t] : params.parameters()) inputs.push_back(*t);
  num::GradCheckOptions opt;
  opt.max_coords_per_input = coords_per_tensor;
  opt.seed = seed;
  return num::grad_check(
      [&](num::Tape& tape, std::span<const num::Var> in) { return module_loss(params, fx, tape, in); }, inputs, opt);
}

}  // namespace checks
