#pragma once

#include <array>
#include <cstddef>

namespace emohead {

/// Number of 3DMM expression coefficients.
inline constexpr std::size_t kExpressionDim = 10;

using ExpressionVector = std::array<double, kExpressionDim>;

/// Expression coefficients α (or a refined α̂). Unitless.
struct ExpressionParams {
  ExpressionVector alpha{};

  double& operator[](std::size_t i) { return alpha[i]; }
  double operator[](std::size_t i) const { return alpha[i]; }
  friend bool operator==(const ExpressionParams&, const ExpressionParams&) = default;
};

inline double dot(const ExpressionVector& a, const ExpressionVector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < kExpressionDim; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace emohead
