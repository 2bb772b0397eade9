#pragma once

#include <string>
#include <utility>
#include <vector>

#include "emohead/numerics/tensor.hpp"

namespace emohead::numerics {

/// Named parameter references in declaration order. The order is the
/// checkpoint order and the optimizer slot order.
using ParamList = std::vector<std::pair<std::string, Tensor*>>;
using ConstParamList = std::vector<std::pair<std::string, const Tensor*>>;

inline ConstParamList const_params(const ParamList& params) {
  ConstParamList out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) out.emplace_back(name, t);
  return out;
}

}  // namespace emohead::numerics
