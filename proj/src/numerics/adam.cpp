#include "emohead/numerics/adam.hpp"

#include <cmath>

#include "emohead/numerics/errors.hpp"

namespace emohead::numerics {

AdamState::AdamState(AdamConfig config, std::span<const Tensor* const> params) : config_(config) {
  for (const Tensor* p : params) {
    m_.emplace_back(p->shape());
    v_.emplace_back(p->shape());
  }
}

AdamState::AdamState(AdamConfig config, const ParamList& params) : config_(config) {
  for (const auto& [name, p] : params) {
    m_.emplace_back(p->shape());
    v_.emplace_back(p->shape());
  }
}

void AdamState::restore(std::uint64_t step, std::vector<Tensor> m, std::vector<Tensor> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) throw DimensionError("adam restore: slot count mismatch");
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i].shape() != m_[i].shape() || v[i].shape() != v_[i].shape()) {
      throw DimensionError("adam restore: slot " + std::to_string(i) + " shape mismatch");
    }
  }
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

void AdamState::update(const ParamList& params, std::span<const Tensor> grads) {
  if (params.size() != grads.size() || params.size() != m_.size()) {
    throw DimensionError("adam: " + std::to_string(params.size()) + " parameters, " + std::to_string(grads.size()) +
                         " gradients, " + std::to_string(m_.size()) + " slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].second->shape() != grads[i].shape() || grads[i].shape() != m_[i].shape()) {
      throw DimensionError("adam: gradient shape " + shape_string(grads[i].shape()) + " for parameter " +
                           params[i].first + " of shape " + shape_string(params[i].second->shape()));
    }
  }
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i].second;
    const Tensor& g = grads[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

}  // namespace emohead::numerics
