#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "emohead/numerics/params.hpp"
#include "emohead/numerics/random.hpp"
#include "emohead/numerics/tape.hpp"
#include "emohead/numerics/tensor.hpp"

namespace emohead::numerics {

/// Fully connected network with tanh between layers.
///
/// weights[l] is in×out and biases[l] is 1×out. The last layer is linear
/// unless `tanh_output` is set (used for trunks whose output feeds other heads).
struct Mlp {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  bool tanh_output = false;

  /// widths = {input, hidden..., output}; needs at least two entries.
  static Mlp init(std::span<const std::size_t> widths, Rng& rng, bool tanh_output = false);
  static Mlp zeros(std::span<const std::size_t> widths, bool tanh_output = false);

  std::size_t input_width() const { return weights.front().rows(); }
  std::size_t output_width() const { return weights.back().cols(); }
  std::size_t layers() const { return weights.size(); }
  std::vector<std::size_t> widths() const;

  /// Appends "<prefix>.w<l>" and "<prefix>.b<l>" in layer order.
  void collect(const std::string& prefix, ParamList& out);
  void collect(const std::string& prefix, ConstParamList& out) const;
};

struct MlpVars {
  std::vector<Var> weights;
  std::vector<Var> biases;
  bool tanh_output = false;

  /// Leaves in the same order as Mlp::collect.
  void append_to(std::vector<Var>& out) const;
};

/// Records the weights on `tape`, as leaves when `trainable`, otherwise constants.
MlpVars bind(Tape& tape, const Mlp& mlp, bool trainable = true);

/// Forward pass over the rows of `x`. Throws DimensionError on width mismatch.
Var mlp_apply(const MlpVars& mlp, Var x);

/// Tape-free forward pass; safe to call concurrently on a shared Mlp.
Tensor mlp_apply(const Mlp& mlp, const Tensor& x);

}  // namespace emohead::numerics
