#pragma once

#include <cstddef>
#include <span>

#include "emohead/numerics/tape.hpp"
#include "emohead/numerics/tensor.hpp"

/// Differentiable primitives over rank-2 tensors. Every function records its
/// result on the tape of its first argument; mixing tapes is an error.
namespace emohead::numerics {

Var matmul(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// a[m×n] + bias[1×n] broadcast over rows.
Var add_bias(Var a, Var bias);
/// a[m×n] scaled row-wise by s[m×1].
Var scale_rows(Var a, Var s);

Var tanh(Var a);
/// x·W + b, optionally followed by tanh, recorded as one node.
Var dense(Var x, Var w, Var b, bool apply_tanh);
Var sigmoid(Var a);
/// log(1 + e^x), evaluated without overflow.
Var softplus(Var a);

/// Row-wise softmax, stabilized by subtracting each row's maximum.
Var softmax_rows(Var a);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
/// Tiles a 1×n row `count` times.
Var repeat_rows(Var a, std::size_t count);
Var reshape(Var a, std::size_t rows, std::size_t cols);

/// Sum of all entries, as 1×1.
Var sum(Var a);
Var mean(Var a);
/// Frobenius norm, as 1×1. The subgradient at zero is taken as zero.
Var l2_norm(Var a);
/// Euclidean norm of each row, as m×1.
Var row_norms(Var a);
/// Sum of elementwise products, as 1×1.
Var dot(Var a, Var b);
/// a / ‖a‖ over the whole tensor.
Var normalize(Var a);

// Tape-free forms used by inference paths and test oracles.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& a);
void tanh_inplace(std::span<double> values);
double softplus(double x);
double sigmoid(double x);

}  // namespace emohead::numerics
