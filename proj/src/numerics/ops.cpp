#include "emohead/numerics/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "emohead/numerics/errors.hpp"

namespace emohead::numerics {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMatrix>;
using Map = Eigen::Map<RowMatrix>;

MapC view(const Tensor& t) { return MapC(t.data(), t.rows(), t.cols()); }
Map view(Tensor& t) { return Map(t.data(), t.rows(), t.cols()); }

void same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) throw std::logic_error(std::string(op) + ": operands on different tapes");
}

void same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}


}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor out({a.rows(), b.cols()});
  view(out).noalias() = view(a) * view(b);
  return out;
}

Var matmul(Var a, Var b) {
  same_tape(a, b, "matmul");
  Tape& tape = a.tape();
  Tensor out = matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) {
      const Tensor& bv = t.value(ib);
      Tensor& ga = t.grad_buffer(ia);
      view(ga).noalias() += view(g) * view(bv).transpose();
    }
    if (t.requires_grad(ib)) {
      const Tensor& av = t.value(ia);
      Tensor& gb = t.grad_buffer(ib);
      view(gb).noalias() += view(av).transpose() * view(g);
    }
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  Tensor out({av.cols(), av.rows()});
  view(out) = view(av).transpose();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    Tensor& ga = t.grad_buffer(ia);
    view(ga) += view(t.grad(self)).transpose();
  });
}

Var add(Var a, Var b) {
  same_tape(a, b, "add");
  same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  view(out) += view(b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

Var sub(Var a, Var b) {
  same_tape(a, b, "sub");
  same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  view(out) -= view(b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate_scaled(ib, t.grad(self), -1.0);
  });
}

Var mul(Var a, Var b) {
  same_tape(a, b, "mul");
  same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  view(out).array() *= view(b.value()).array();
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) view(t.grad_buffer(ia)).array() += view(g).array() * view(t.value(ib)).array();
    if (t.requires_grad(ib)) view(t.grad_buffer(ib)).array() += view(g).array() * view(t.value(ia)).array();
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  view(out) *= factor;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia, factor](Tape& t, std::size_t self) {
    t.accumulate_scaled(ia, t.grad(self), factor);
  });
}

Var add_bias(Var a, Var bias) {
  same_tape(a, bias, "add_bias");
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw DimensionError("add_bias: bias " + shape_string(bv.shape()) + " for input " + shape_string(av.shape()));
  }
  Tensor out = av;
  view(out).rowwise() += view(bv).row(0);
  const std::size_t ia = a.id(), ib = bias.id();
  return a.tape().record(std::move(out), a.requires_grad() || bias.requires_grad(),
                         [ia, ib](Tape& t, std::size_t self) {
                           const Tensor& g = t.grad(self);
                           t.accumulate(ia, g);
                           if (t.requires_grad(ib)) view(t.grad_buffer(ib)).row(0) += view(g).colwise().sum();
                         });
}

Var scale_rows(Var a, Var s) {
  same_tape(a, s, "scale_rows");
  const Tensor& av = a.value();
  const Tensor& sv = s.value();
  if (sv.rows() != av.rows() || sv.cols() != 1) {
    throw DimensionError("scale_rows: scale " + shape_string(sv.shape()) + " for input " + shape_string(av.shape()));
  }
  Tensor out = av;
  for (std::size_t r = 0; r < av.rows(); ++r) view(out).row(r) *= sv[r];
  const std::size_t ia = a.id(), is = s.id();
  return a.tape().record(std::move(out), a.requires_grad() || s.requires_grad(), [ia, is](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av2 = t.value(ia);
    const Tensor& sv2 = t.value(is);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad_buffer(ia);
      for (std::size_t r = 0; r < g.rows(); ++r) view(ga).row(r) += sv2[r] * view(g).row(r);
    }
    if (t.requires_grad(is)) {
      Tensor& gs = t.grad_buffer(is);
      for (std::size_t r = 0; r < g.rows(); ++r) gs[r] += view(g).row(r).dot(view(av2).row(r));
    }
  });
}

void tanh_inplace(std::span<double> values) {
  // 1 - 2/(e^{2x}+1) vectorizes where std::tanh does not; both saturate cleanly.
  Eigen::Map<Eigen::ArrayXd> v(values.data(), static_cast<Eigen::Index>(values.size()));
  v = 1.0 - 2.0 / ((2.0 * v).exp() + 1.0);
}

Var tanh(Var a) {
  Tensor out = a.value();
  tanh_inplace(out.values());
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    const auto y = view(t.value(self)).array();
    view(t.grad_buffer(ia)).array() += view(t.grad(self)).array() * (1.0 - y * y);
  });
}

Var dense(Var x, Var w, Var b, bool apply_tanh) {
  same_tape(x, w, "dense");
  same_tape(x, b, "dense");
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw DimensionError("dense: " + shape_string(xv.shape()) + " x " + shape_string(wv.shape()) + " + " +
                         shape_string(bv.shape()));
  }
  Tensor out({xv.rows(), wv.cols()});
  view(out).noalias() = view(xv) * view(wv);
  view(out).rowwise() += view(bv).row(0);
  if (apply_tanh) tanh_inplace(out.values());
  const std::size_t ix = x.id(), iw = w.id(), ib = b.id();
  const bool need = x.requires_grad() || w.requires_grad() || b.requires_grad();
  return x.tape().record(std::move(out), need, [ix, iw, ib, apply_tanh](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor local;
    const Tensor* d = &g;
    if (apply_tanh) {
      local = g;
      const auto y = view(t.value(self)).array();
      view(local).array() *= 1.0 - y * y;
      d = &local;
    }
    if (t.requires_grad(ix)) view(t.grad_buffer(ix)).noalias() += view(*d) * view(t.value(iw)).transpose();
    if (t.requires_grad(iw)) view(t.grad_buffer(iw)).noalias() += view(t.value(ix)).transpose() * view(*d);
    if (t.requires_grad(ib)) view(t.grad_buffer(ib)).row(0) += view(*d).colwise().sum();
  });
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

Var sigmoid(Var a) {
  Tensor out = a.value();
  {
    auto v = view(out).array();
    v = 1.0 / (1.0 + (-v).exp());
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    const auto y = view(t.value(self)).array();
    view(t.grad_buffer(ia)).array() += view(t.grad(self)).array() * y * (1.0 - y);
  });
}

Var softplus(Var a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = softplus(v);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    const Tensor& x = t.value(ia);
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[i] * sigmoid(x[i]);
  });
}

Tensor softmax_rows(const Tensor& a) {
  Tensor out = a;
  const std::size_t c = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double* row = out.data() + r * c;
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - mx);
      total += row[j];
    }
    for (std::size_t j = 0; j < c; ++j) row[j] /= total;
  }
  return out;
}

Var softmax_rows(Var a) {
  Tensor out = softmax_rows(a.value());
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_buffer(ia);
    const std::size_t c = y.cols();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double inner = 0.0;
      for (std::size_t j = 0; j < c; ++j) inner += g.at(r, j) * y.at(r, j);
      for (std::size_t j = 0; j < c; ++j) ga.at(r, j) += y.at(r, j) * (g.at(r, j) - inner);
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  bool needs = false;
  for (const auto& p : parts) {
    same_tape(parts[0], p, "concat_cols");
    if (p.value().rows() != rows) throw DimensionError("concat_cols: row counts differ");
    cols += p.value().cols();
    needs = needs || p.requires_grad();
  }
  Tensor out({rows, cols});
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    view(out).middleCols(off, p.value().cols()) = view(p.value());
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.value().cols();
  }
  return parts[0].tape().record(std::move(out), needs, [ids, offsets](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      Tensor& gp = t.grad_buffer(ids[k]);
      view(gp) += view(g).middleCols(offsets[k], gp.cols());
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  bool needs = false;
  for (const auto& p : parts) {
    same_tape(parts[0], p, "concat_rows");
    if (p.value().cols() != cols) throw DimensionError("concat_rows: column counts differ");
    rows += p.value().rows();
    needs = needs || p.requires_grad();
  }
  Tensor out({rows, cols});
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + off * cols);
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.value().rows();
  }
  return parts[0].tape().record(std::move(out), needs, [ids, offsets, cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      Tensor& gp = t.grad_buffer(ids[k]);
      const double* src = g.data() + offsets[k] * cols;
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += src[i];
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  if (count == 0 || begin + count > av.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of " + std::to_string(av.rows()));
  }
  const std::size_t cols = av.cols();
  Tensor out({count, cols});
  std::copy(av.data() + begin * cols, av.data() + (begin + count) * cols, out.data());
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia, begin, cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_buffer(ia);
    double* dst = ga.data() + begin * cols;
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
}

Var repeat_rows(Var a, std::size_t count) {
  const Tensor& av = a.value();
  if (av.rows() != 1) throw DimensionError("repeat_rows: expected a single row, got " + shape_string(av.shape()));
  if (count == 0) throw DimensionError("repeat_rows: count must be positive");
  Tensor out({count, av.cols()});
  view(out).rowwise() = view(av).row(0);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    view(t.grad_buffer(ia)).row(0) += view(t.grad(self)).colwise().sum();
  });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  const Tensor& av = a.value();
  if (rows * cols != av.size()) {
    throw DimensionError("reshape: " + shape_string(av.shape()) + " to [" + std::to_string(rows) + "x" +
                         std::to_string(cols) + "]");
  }
  Tensor out({rows, cols}, std::vector<double>(av.values().begin(), av.values().end()));
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(total), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (auto& v : t.grad_buffer(ia).values()) v += g;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var l2_norm(Var a) {
  double sq = 0.0;
  for (double v : a.value().values()) sq += v * v;
  const double n = std::sqrt(sq);
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(n), a.requires_grad(), [ia, n](Tape& t, std::size_t self) {
    if (n == 0.0) return;
    t.accumulate_scaled(ia, t.value(ia), t.grad(self)[0] / n);
  });
}

Var row_norms(Var a) {
  const Tensor& av = a.value();
  Tensor out({av.rows(), 1});
  for (std::size_t r = 0; r < av.rows(); ++r) out[r] = view(av).row(r).norm();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    const Tensor& n = t.value(self);
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ia);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      if (n[r] == 0.0) continue;
      view(ga).row(r) += (g[r] / n[r]) * view(x).row(r);
    }
  });
}

Var dot(Var a, Var b) {
  same_tape(a, b, "dot");
  same_shape(a.value(), b.value(), "dot");
  double total = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) total += a.value()[i] * b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(Tensor::scalar(total), a.requires_grad() || b.requires_grad(),
                         [ia, ib](Tape& t, std::size_t self) {
                           const double g = t.grad(self)[0];
                           t.accumulate_scaled(ia, t.value(ib), g);
                           t.accumulate_scaled(ib, t.value(ia), g);
                         });
}

Var normalize(Var a) {
  const Tensor& av = a.value();
  double sq = 0.0;
  for (double v : av.values()) sq += v * v;
  const double n = std::sqrt(sq);
  if (n == 0.0) throw NonFiniteError("normalize: zero vector");
  Tensor out = av;
  for (auto& v : out.values()) v /= n;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(), [ia, n](Tape& t, std::size_t self) {
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    double yg = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) yg += y[i] * g[i];
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += (g[i] - y[i] * yg) / n;
  });
}

}  // namespace emohead::numerics
