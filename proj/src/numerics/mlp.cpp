#include "emohead/numerics/mlp.hpp"

#include "emohead/numerics/errors.hpp"
#include "emohead/numerics/ops.hpp"

namespace emohead::numerics {

Mlp Mlp::init(std::span<const std::size_t> widths, Rng& rng, bool tanh_output) {
  if (widths.size() < 2) throw DimensionError("Mlp::init: need input and output widths");
  Mlp m;
  m.tanh_output = tanh_output;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    m.weights.push_back(uniform_fan_in(widths[l], widths[l + 1], rng));
    Tensor b = uniform_fan_in(widths[l], widths[l + 1], rng);
    m.biases.push_back(Tensor({1, widths[l + 1]}, std::vector<double>(b.data(), b.data() + widths[l + 1])));
  }
  return m;
}

Mlp Mlp::zeros(std::span<const std::size_t> widths, bool tanh_output) {
  if (widths.size() < 2) throw DimensionError("Mlp::zeros: need input and output widths");
  Mlp m;
  m.tanh_output = tanh_output;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    m.weights.push_back(Tensor::zeros(widths[l], widths[l + 1]));
    m.biases.push_back(Tensor::zeros(1, widths[l + 1]));
  }
  return m;
}

std::vector<std::size_t> Mlp::widths() const {
  std::vector<std::size_t> w;
  w.push_back(input_width());
  for (const auto& t : weights) w.push_back(t.cols());
  return w;
}

void Mlp::collect(const std::string& prefix, ParamList& out) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.emplace_back(prefix + ".w" + std::to_string(l), &weights[l]);
    out.emplace_back(prefix + ".b" + std::to_string(l), &biases[l]);
  }
}

void Mlp::collect(const std::string& prefix, ConstParamList& out) const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.emplace_back(prefix + ".w" + std::to_string(l), &weights[l]);
    out.emplace_back(prefix + ".b" + std::to_string(l), &biases[l]);
  }
}

void MlpVars::append_to(std::vector<Var>& out) const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(weights[l]);
    out.push_back(biases[l]);
  }
}

MlpVars bind(Tape& tape, const Mlp& mlp, bool trainable) {
  MlpVars v;
  v.tanh_output = mlp.tanh_output;
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    v.weights.push_back(trainable ? tape.leaf(mlp.weights[l]) : tape.constant(mlp.weights[l]));
    v.biases.push_back(trainable ? tape.leaf(mlp.biases[l]) : tape.constant(mlp.biases[l]));
  }
  return v;
}

Var mlp_apply(const MlpVars& mlp, Var x) {
  if (mlp.weights.empty()) throw DimensionError("mlp_apply: empty network");
  if (x.value().cols() != mlp.weights.front().value().rows()) {
    throw DimensionError("mlp_apply: input width " + std::to_string(x.value().cols()) + " but network expects " +
                         std::to_string(mlp.weights.front().value().rows()));
  }
  Var h = x;
  const std::size_t n = mlp.weights.size();
  for (std::size_t l = 0; l < n; ++l) {
    h = dense(h, mlp.weights[l], mlp.biases[l], l + 1 < n || mlp.tanh_output);
  }
  return h;
}

Tensor mlp_apply(const Mlp& mlp, const Tensor& x) {
  if (mlp.weights.empty()) throw DimensionError("mlp_apply: empty network");
  if (x.cols() != mlp.input_width()) {
    throw DimensionError("mlp_apply: input width " + std::to_string(x.cols()) + " but network expects " +
                         std::to_string(mlp.input_width()));
  }
  Tensor h = x;
  const std::size_t n = mlp.weights.size();
  for (std::size_t l = 0; l < n; ++l) {
    h = matmul(h, mlp.weights[l]);
    const std::size_t c = h.cols();
    for (std::size_t r = 0; r < h.rows(); ++r) {
      for (std::size_t j = 0; j < c; ++j) h.at(r, j) += mlp.biases[l][j];
    }
    if (l + 1 < n || mlp.tanh_output) tanh_inplace(h.values());
  }
  return h;
}

}  // namespace emohead::numerics
