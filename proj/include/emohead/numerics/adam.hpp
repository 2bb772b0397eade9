#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "emohead/numerics/params.hpp"
#include "emohead/numerics/tensor.hpp"

namespace emohead::numerics {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment accumulators for ParamList-ordered parameters.
class AdamState {
 public:
  AdamState() = default;
  AdamState(AdamConfig config, std::span<const Tensor* const> params);
  explicit AdamState(AdamConfig config, const ParamList& params);

  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  std::uint64_t step() const { return step_; }

  const std::vector<Tensor>& first_moment() const { return m_; }
  const std::vector<Tensor>& second_moment() const { return v_; }

  /// Restores accumulators (checkpoint resume). Shapes must match.
  void restore(std::uint64_t step, std::vector<Tensor> m, std::vector<Tensor> v);

  /// One bias-corrected Adam update. Throws DimensionError unless the
  /// gradients line up with the parameters and the accumulators.
  void update(const ParamList& params, std::span<const Tensor> grads);

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

inline void adam_step(AdamState& state, const ParamList& params, std::span<const Tensor> grads) {
  state.update(params, grads);
}

}  // namespace emohead::numerics
