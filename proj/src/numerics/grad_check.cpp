#include "emohead/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "emohead/numerics/errors.hpp"
#include "emohead/numerics/random.hpp"

namespace emohead::numerics {
namespace {

double evaluate(const ScalarFn& f, const std::vector<Tensor>& inputs, std::size_t input, std::size_t coord) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  const Var out = f(tape, vars);
  const double v = out.value().item();
  if (!std::isfinite(v)) {
    throw NonFiniteError("grad_check: non-finite value while perturbing input " + std::to_string(input) +
                         " coordinate " + std::to_string(coord));
  }
  return v;
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, const GradCheckOptions& options) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.leaf(t));
    const Var out = f(tape, vars);
    if (!std::isfinite(out.value().item())) throw NonFiniteError("grad_check: non-finite value at the base point");
    tape.backward(out);
    analytic = gradients(tape, vars);
  }
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    for (std::size_t i = 0; i < analytic[k].size(); ++i) {
      if (!std::isfinite(analytic[k][i])) {
        throw NonFiniteError("grad_check: non-finite analytic gradient at input " + std::to_string(k) +
                             " coordinate " + std::to_string(i));
      }
    }
  }

  GradCheckReport report;
  Rng rng(options.seed);
  std::vector<Tensor> work = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<std::size_t> coords(inputs[k].size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_input != 0 && coords.size() > options.max_coords_per_input) {
      for (std::size_t i = 0; i < options.max_coords_per_input; ++i) {
        std::swap(coords[i], coords[i + uniform_index(rng, coords.size() - i)]);
      }
      coords.resize(options.max_coords_per_input);
    }
    for (std::size_t i : coords) {
      const double x0 = work[k][i];
      work[k][i] = x0 + options.eps;
      const double fp = evaluate(f, work, k, i);
      work[k][i] = x0 - options.eps;
      const double fm = evaluate(f, work, k, i);
      work[k][i] = x0;
      const double numeric = (fp - fm) / (2.0 * options.eps);
      const double err = std::abs(analytic[k][i] - numeric) / std::max(1.0, std::abs(numeric));
      ++report.checked;
      if (err > report.max_rel_err) {
        report.max_rel_err = err;
        report.worst_input = k;
        report.worst_coord = i;
      }
    }
  }
  return report;
}

double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double eps) {
  const ScalarFn wrapped = [&f](Tape& tape, std::span<const Var> vars) { return f(tape, vars[0]); };
  GradCheckOptions options;
  options.eps = eps;
  return grad_check(wrapped, std::vector<Tensor>{x}, options).max_rel_err;
}

}  // namespace emohead::numerics
