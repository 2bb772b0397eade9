#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "emohead/numerics/tape.hpp"
#include "emohead/numerics/tensor.hpp"

namespace emohead::numerics {

/// Builds a scalar on `tape` from leaves bound to the inputs under test.
using ScalarFn = std::function<Var(Tape& tape, std::span<const Var> inputs)>;

struct GradCheckOptions {
  double eps = 1e-5;
  /// 0 checks every coordinate; otherwise a seeded sample of this many per input.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_coord = 0;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients with central differences. The error per
/// coordinate is |analytic − numeric| / max(1, |numeric|). Throws
/// NonFiniteError naming the input and coordinate if any evaluation is not finite.
GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, const GradCheckOptions& options = {});

/// Single-input convenience form; returns the maximum relative error.
double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double eps = 1e-5);

}  // namespace emohead::numerics
