#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "emohead/numerics/adam.hpp"
#include "emohead/numerics/checkpoint.hpp"
#include "emohead/numerics/errors.hpp"
#include "emohead/numerics/grad_check.hpp"
#include "emohead/numerics/mlp.hpp"
#include "emohead/numerics/ops.hpp"
#include "emohead/numerics/random.hpp"

using namespace emohead;
using namespace emohead::numerics;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Tensor t({r, c});
  for (auto& v : t.values()) v = scale * uniform(rng, -1.0, 1.0);
  return t;
}

Tensor triple_loop(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
      out.at(i, j) = s;
    }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Tensor, RejectsBadShapesAndNonFinite) {
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  EXPECT_THROW(Tensor({0, 2}), DimensionError);
  EXPECT_THROW(Tensor::from_external({1, 2}, {1.0, NAN}), NonFiniteError);
  EXPECT_THROW(Tensor::from_external({1, 2}, {INFINITY, 0.0}), NonFiniteError);
  EXPECT_NO_THROW(Tensor::from_external({1, 2}, {1.0, 2.0}));
}

TEST(Matmul, IdentityAndHandChecked) {
  Rng rng(1);
  const Tensor m = random_tensor(3, 4, rng);
  EXPECT_EQ(matmul(Tensor::identity(3), m), m);
  const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
  const Tensor b = Tensor::from_rows({{0}, {1}});
  EXPECT_EQ(matmul(a, b), Tensor::from_rows({{2}, {4}}));
}

TEST(Matmul, MatchesTripleLoopOracle) {
  Rng rng(7);
  const Tensor a = random_tensor(5, 7, rng);
  const Tensor b = random_tensor(7, 3, rng);
  EXPECT_LT(max_abs_diff(matmul(a, b), triple_loop(a, b)), 1e-12);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + uniform_index(rng, 16), k = 1 + uniform_index(rng, 16), n = 1 + uniform_index(rng, 16);
    const Tensor x = random_tensor(m, k, rng), y = random_tensor(k, n, rng);
    EXPECT_LT(max_abs_diff(matmul(x, y), triple_loop(x, y)), 1e-12);
  }
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Tensor::zeros(2, 3), Tensor::zeros(2, 3)), DimensionError);
  Tape tape;
  EXPECT_THROW(matmul(tape.leaf(Tensor::zeros(2, 3)), tape.leaf(Tensor::zeros(4, 1))), DimensionError);
}

TEST(Softmax, AnalyticCases) {
  const Tensor u = softmax_rows(Tensor::zeros(2, 4));
  for (double v : u.values()) EXPECT_DOUBLE_EQ(v, 0.25);
  const double x = 0.7;
  const Tensor two = softmax_rows(Tensor::from_rows({{x, x + std::log(3.0)}}));
  EXPECT_NEAR(two[0], 0.25, 1e-15);
  EXPECT_NEAR(two[1], 0.75, 1e-15);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t r = 1 + uniform_index(rng, 6), c = 1 + uniform_index(rng, 8);
    Tensor m = random_tensor(r, c, rng, 10.0);
    const Tensor y = softmax_rows(m);
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        EXPECT_GE(y.at(i, j), 0.0);
        s += y.at(i, j);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
    for (auto& v : m.values()) v += 1000.0;
    EXPECT_LT(max_abs_diff(softmax_rows(m), y), 1e-12);
  }
}

TEST(Softmax, FirstColumnGradientMatchesAnalyticJacobian) {
  const Tensor x = Tensor::from_rows({{0.3, -1.2}, {2.0, 0.5}});
  // Sum of the first column: mask entries (0,0) and (1,0).
  Tape t2;
  const Var x2 = t2.leaf(x);
  const Var y2 = softmax_rows(x2);
  const Var first = sum(mul(y2, t2.constant(Tensor::from_rows({{1, 0}, {1, 0}}))));
  t2.backward(first);
  const Tensor g = t2.grad(x2);
  const Tensor yv = softmax_rows(x);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t j = 0; j < 2; ++j) {
      const double analytic = yv.at(r, 0) * ((j == 0 ? 1.0 : 0.0) - yv.at(r, j));
      EXPECT_NEAR(g.at(r, j), analytic, 1e-15);
    }
  }
  const double err = grad_check(
      [](Tape& t, Var v) { return sum(mul(softmax_rows(v), t.constant(Tensor::from_rows({{1, 0}, {1, 0}})))); },
      x);
  EXPECT_LT(err, 1e-9);
}

TEST(GradCheck, Quadratic) {
  const double err = grad_check([](Tape&, Var v) { return sum(mul(v, v)); }, Tensor::from_rows({{1, 2, 3}}));
  EXPECT_LT(err, 1e-9);
  Tape tape;
  const Var x = tape.leaf(Tensor::from_rows({{1, 2, 3}}));
  tape.backward(sum(mul(x, x)));
  EXPECT_EQ(tape.grad(x), Tensor::from_rows({{2, 4, 6}}));
}

TEST(GradCheck, NonFiniteNamesCoordinate) {
  const ScalarFn f = [](Tape& t, std::span<const Var> v) {
    // log-like blow-up: 1/x has an infinite value at x = 0 ± eps only on coordinate 1.
    const Tensor& x = v[0].value();
    Tensor r({1, 1});
    r[0] = 1.0 / (x[1] - 1e-5);
    (void)t;
    return v[0].tape().constant(r);
  };
  try {
    grad_check(f, {Tensor::from_rows({{0.5, 0.0}})});
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("coordinate 1"), std::string::npos) << e.what();
  }
}

TEST(GradCheck, SampledCoordinateMode) {
  Rng rng(5);
  const Tensor a = random_tensor(20, 20, rng);
  GradCheckOptions opts;
  opts.max_coords_per_input = 7;
  const auto report =
      grad_check([](Tape&, std::span<const Var> v) { return sum(tanh(matmul(v[0], v[0]))); }, {a}, opts);
  EXPECT_EQ(report.checked, 7u);
  EXPECT_LT(report.max_rel_err, 1e-7);
}

TEST(Tape, DiamondAccumulatesBranchAdjoints) {
  // y = tanh(x) * sigmoid(x) + softplus(x): x feeds three branches.
  const ScalarFn f = [](Tape&, std::span<const Var> v) {
    return sum(add(mul(tanh(v[0]), sigmoid(v[0])), softplus(v[0])));
  };
  Rng rng(3);
  const auto report = grad_check(f, {random_tensor(3, 4, rng)});
  EXPECT_LT(report.max_rel_err, 1e-9);

  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(2.0));
  tape.backward(sum(add(x, x)));
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 2.0);
}

TEST(Tape, BackwardVisitsInReverseRecordingOrder) {
  Tape tape;
  std::vector<int> order;
  const Var x = tape.leaf(Tensor::scalar(1.0));
  auto step = [&](Var in, int tag) {
    const std::size_t id = in.id();
    return tape.record(in.value(), true, [&order, tag, id](Tape& t, std::size_t self) {
      order.push_back(tag);
      t.accumulate(id, t.grad(self));
    });
  };
  const Var a = step(x, 1);
  const Var b = step(a, 2);
  const Var c = step(b, 3);
  tape.backward(c);
  EXPECT_EQ(order, (std::vector<int>{3, 2, 1}));
}

TEST(Ops, EveryPrimitivePassesFiniteDifferences) {
  Rng rng(17);
  const Tensor a = random_tensor(3, 4, rng), b = random_tensor(3, 4, rng), w = random_tensor(4, 2, rng);
  const Tensor bias = random_tensor(1, 4, rng), s = random_tensor(3, 1, rng);
  const ScalarFn f = [](Tape& t, std::span<const Var> v) {
    const Var ab = add(sub(v[0], scale(v[1], 0.5)), add_bias(v[1], v[3]));
    const Var m = mul(matmul(ab, v[2]), matmul(v[1], v[2]));
    const Var sr = scale_rows(softmax_rows(ab), v[4]);
    const Var tr = matmul(ab, transpose(v[0]));
    std::vector<Var> parts{m, sr};
    const Var cc = concat_cols(parts);
    std::vector<Var> rows{cc, cc};
    const Var cr = concat_rows(rows);
    const Var rs = reshape(slice_rows(cr, 1, 3), 6, 3);
    const Var rep = repeat_rows(slice_rows(v[3], 0, 1), 2);
    const Var parts_sum = add(add(sum(sigmoid(rs)), l2_norm(tr)), sum(row_norms(rep)));
    const Var nd = dot(normalize(ab), v[0]);
    (void)t;
    return add(add(parts_sum, nd), mean(softplus(m)));
  };
  const auto report = grad_check(f, {a, b, w, bias, s});
  EXPECT_LT(report.max_rel_err, 1e-8) << "input " << report.worst_input << " coord " << report.worst_coord;
}

TEST(Ops, NormSubgradientAtZeroIsZero) {
  Tape tape;
  const Var x = tape.leaf(Tensor::zeros(2, 3));
  tape.backward(add(l2_norm(x), sum(row_norms(x))));
  const Tensor g = tape.grad(x);
  for (double v : g.values()) EXPECT_EQ(v, 0.0);
}

TEST(Mlp, ZeroWeightsGiveZeroOutput) {
  const std::vector<std::size_t> widths{6, 5, 4, 3};
  const Mlp m = Mlp::zeros(widths);
  const Tensor y = mlp_apply(m, Tensor::filled(2, 6, 0.7));
  EXPECT_EQ(y.cols(), 3u);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Mlp, SingleLayerIsAffine) {
  Rng rng(2);
  const std::vector<std::size_t> widths{4, 3};
  const Mlp m = Mlp::init(widths, rng);
  const Tensor x = random_tensor(5, 4, rng);
  Tensor expect = triple_loop(x, m.weights[0]);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 3; ++c) expect.at(r, c) += m.biases[0][c];
  EXPECT_LT(max_abs_diff(mlp_apply(m, x), expect), 1e-14);
}

TEST(Mlp, WidthMismatchThrows) {
  Rng rng(2);
  const std::vector<std::size_t> widths{4, 3};
  const Mlp m = Mlp::init(widths, rng);
  EXPECT_THROW(mlp_apply(m, Tensor::zeros(1, 5)), DimensionError);
}

TEST(Mlp, TapeAndTapeFreeAgreeAndGradientsMatchFiniteDifferences) {
  Rng rng(9);
  const std::vector<std::size_t> widths{5, 8, 6, 3};
  const Mlp m = Mlp::init(widths, rng);
  const Tensor x = random_tensor(4, 5, rng);
  {
    Tape tape;
    const Var y = mlp_apply(bind(tape, m, false), tape.constant(x));
    EXPECT_LT(max_abs_diff(y.value(), mlp_apply(m, x)), 1e-15);
  }
  std::vector<Tensor> inputs{x};
  for (std::size_t l = 0; l < m.layers(); ++l) {
    inputs.push_back(m.weights[l]);
    inputs.push_back(m.biases[l]);
  }
  const ScalarFn f = [&](Tape&, std::span<const Var> v) {
    MlpVars mv;
    for (std::size_t l = 0; l < m.layers(); ++l) {
      mv.weights.push_back(v[1 + 2 * l]);
      mv.biases.push_back(v[2 + 2 * l]);
    }
    return sum(mlp_apply(mv, v[0]));
  };
  const auto report = grad_check(f, inputs, {.eps = 1e-5});
  EXPECT_LT(report.max_rel_err, 1e-4);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Tensor p = Tensor::from_rows({{1.0, -2.0}});
  ParamList params{{"p", &p}};
  AdamState st({}, params);
  const std::vector<Tensor> g{Tensor::zeros(1, 2)};
  st.update(params, g);
  EXPECT_EQ(p, Tensor::from_rows({{1.0, -2.0}}));
  EXPECT_EQ(st.step(), 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor p = Tensor::from_rows({{0.0, 0.0}});
  ParamList params{{"p", &p}};
  AdamState st({.lr = 0.01}, params);
  const std::vector<Tensor> g{Tensor::from_rows({{3.0, -0.2}})};
  st.update(params, g);
  EXPECT_NEAR(p[0], -0.01, 1e-9);
  EXPECT_NEAR(p[1], 0.01, 1e-9);
}

TEST(Adam, ConvergesOnScalarQuadratic) {
  Tensor x = Tensor::scalar(0.0);
  ParamList params{{"x", &x}};
  AdamState st({.lr = 0.1}, params);
  for (int i = 0; i < 200; ++i) {
    const std::vector<Tensor> g{Tensor::scalar(2.0 * (x[0] - 3.0))};
    st.update(params, g);
  }
  EXPECT_LT(std::abs(x[0] - 3.0), 0.1);
  EXPECT_EQ(st.step(), 200u);
}

TEST(Adam, ShapeMismatchThrows) {
  Tensor p = Tensor::zeros(1, 2);
  ParamList params{{"p", &p}};
  AdamState st({}, params);
  const std::vector<Tensor> g{Tensor::zeros(2, 1)};
  EXPECT_THROW(st.update(params, g), DimensionError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(4);
  Tensor a = random_tensor(3, 5, rng), b = random_tensor(1, 7, rng);
  ParamList params{{"a", &a}, {"b", &b}};
  const nlohmann::json meta{{"d", 8}};
  const std::string bytes = encode_checkpoint(const_params(params), meta);
  const Checkpoint c = decode_checkpoint(bytes);
  EXPECT_EQ(c.get("a"), a);
  EXPECT_EQ(c.get("b"), b);
  EXPECT_EQ(c.meta, meta);
  EXPECT_EQ(encode_checkpoint({{"a", &c.get("a")}, {"b", &c.get("b")}}, c.meta), bytes);

  // 32-bit storage: the second save of a reloaded file reproduces the bytes.
  const std::string f32 = encode_checkpoint(const_params(params), meta, Dtype::f32);
  const Checkpoint c32 = decode_checkpoint(f32);
  EXPECT_EQ(encode_checkpoint({{"a", &c32.get("a")}, {"b", &c32.get("b")}}, c32.meta, Dtype::f32), f32);

  Tensor a2 = Tensor::zeros(3, 5), b2 = Tensor::zeros(1, 7);
  assign_parameters(c, {{"a", &a2}, {"b", &b2}});
  EXPECT_EQ(a2, a);
}

TEST(Checkpoint, TruncationAndMismatchRejected) {
  Tensor a = Tensor::filled(2, 2, 1.5);
  const std::string bytes = encode_checkpoint({{"a", &a}}, {});
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 4)), LoadError);
  const Checkpoint c = decode_checkpoint(bytes);
  Tensor wrong = Tensor::zeros(1, 4);
  EXPECT_THROW(assign_parameters(c, {{"a", &wrong}}), LoadError);
  Tensor other = Tensor::zeros(2, 2);
  EXPECT_THROW(assign_parameters(c, {{"b", &other}}), LoadError);
}
