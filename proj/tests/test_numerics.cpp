#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tcra/numerics/grad_check.hpp"
#include "tcra/numerics/tape.hpp"
#include "test_support.hpp"

using namespace tcra;
using tcra::testing::random_tensor;

TEST(Tensor, RejectsZeroDimsAndMismatchedData) {
  EXPECT_THROW(Tensor<double>({2, 0}), DimensionError);
  EXPECT_THROW(Tensor<double>({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW((Tensor<double>::matrix({{1, 2}, {3}})), DimensionError);
}

TEST(Tensor, SliceAndRowMean) {
  auto t = Tensor<double>({2, 2, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  auto s = t.slice(1);
  EXPECT_EQ(s.shape(), (Shape{2, 3}));
  EXPECT_EQ(s, Tensor<double>::matrix({{7, 8, 9}, {10, 11, 12}}));
  EXPECT_EQ(row_mean(s), Tensor<double>::vector({8.5, 9.5, 10.5}));
  EXPECT_THROW(t.slice(2), DimensionError);
}

TEST(Tensor, ArgmaxTiesGoToLowestIndex) {
  std::vector<double> v{0.25, 0.5, 0.5, 0.1};
  EXPECT_EQ(argmax<double>(v), 1u);
}

TEST(Ops, MatmulHandExamples) {
  Tape<double> t;
  auto a = t.constant(Tensor<double>::matrix({{1, 2}, {3, 4}}));
  auto ones = t.constant(Tensor<double>::matrix({{1}, {1}}));
  const Tensor<double> c = matmul(a, ones).value();
  EXPECT_EQ(c, Tensor<double>::matrix({{3}, {7}}));
  auto id = t.constant(Tensor<double>::matrix({{1, 0}, {0, 1}}));
  const Tensor<double> same = matmul(a, id).value();
  EXPECT_EQ(same, a.value());
  EXPECT_THROW(matmul(a, t.constant(Tensor<double>::matrix({{1, 2, 3}}))), DimensionError);
}

TEST(Ops, MatmulMatchesNaiveLoop) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t m = 1 + rng() % 5, k = 1 + rng() % 5, n = 1 + rng() % 5;
    auto A = random_tensor<double>(rng, {m, k});
    auto B = random_tensor<double>(rng, {k, n});
    Tape<double> t;
    auto C = matmul(t.constant(A), t.constant(B)).value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0;
        for (std::size_t p = 0; p < k; ++p) acc += A[i * k + p] * B[p * n + j];
        EXPECT_NEAR(C.at(i, j), acc, 1e-12);
      }
  }
}

TEST(Ops, SigmoidAndTanhValues) {
  Tape<double> t;
  auto x = t.constant(Tensor<double>::vector({0.0, 2.0, -2.0, 1000.0, -1000.0}));
  auto s = sigmoid(x).value();
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_NEAR(s[1], 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(s[1] + s[2], 1.0, 1e-15);
  EXPECT_TRUE(std::isfinite(s[3]) && std::isfinite(s[4]));
  EXPECT_NEAR(s[3], 1.0, 1e-15);
  EXPECT_NEAR(s[4], 0.0, 1e-30);
  auto th = tanh(x).value();
  EXPECT_DOUBLE_EQ(th[0], 0.0);
  EXPECT_NEAR(th[1], (std::exp(4.0) - 1) / (std::exp(4.0) + 1), 1e-15);
}

TEST(Ops, SoftmaxExampleAndShiftInvariance) {
  Tape<double> t;
  auto p = softmax(t.constant(Tensor<double>::vector({0.0, std::log(2.0)}))).value();
  EXPECT_NEAR(p[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 2.0 / 3.0, 1e-15);

  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    auto z = random_tensor<double>(rng, {6}, 3.0);
    auto shifted = z;
    for (auto& v : shifted.values()) v += 123.0;
    auto a = softmax_values(z), b = softmax_values(shifted);
    double total = 0;
    for (std::size_t k = 0; k < 6; ++k) {
      EXPECT_NEAR(a[k], b[k], 1e-12);
      total += a[k];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  auto big = softmax_values(Tensor<double>::vector({1000.0, 1000.0}));
  EXPECT_DOUBLE_EQ(big[0], 0.5);
}

TEST(GradCheck, SquareAtThree) {
  Parameter<double> x("x", Tensor<double>::vector({3.0}));
  Parameter<double>* ps[] = {&x};
  auto r = grad_check<double>([&](Tape<double>& t) { auto v = t.param(x); return sum(mul(v, v)); }, ps);
  EXPECT_TRUE(r.passed);
  EXPECT_NEAR(r.worst_analytic, 6.0, 1e-12);
  EXPECT_NEAR(r.worst_numeric, 6.0, 1e-6);
}

TEST(GradCheck, ConstantFunctionHasZeroGradients) {
  Parameter<double> x("x", Tensor<double>::vector({1.0, -2.0}));
  Parameter<double>* ps[] = {&x};
  auto r = grad_check<double>([&](Tape<double>& t) { return sum(t.constant(Tensor<double>::vector({5.0}))); }, ps);
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.max_abs_error, 0.0);
  EXPECT_EQ(r.entries_checked, 2u);
}

TEST(GradCheck, DetectsWrongGradient) {
  // A deliberately broken op: forward x², backward claims x.
  Parameter<double> x("x", Tensor<double>::vector({2.0}));
  Parameter<double>* ps[] = {&x};
  auto broken = [&](Tape<double>& t) {
    auto v = t.param(x);
    Tensor<double> out({1}, {v.value()[0] * v.value()[0]});
    return t.record(std::move(out), true, [id = v.id](Tape<double>& tp, std::size_t self) {
      tp.grad_ref(id)[0] += tp.grad_ref(self)[0] * tp.value(id)[0];
    });
  };
  auto r = grad_check<double>(broken, ps);
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.worst_param, "x");
}

TEST(GradCheck, NonFiniteValueThrows) {
  Parameter<double> x("x", Tensor<double>::vector({-1.0}));
  Parameter<double>* ps[] = {&x};
  auto f = [&](Tape<double>& t) {
    auto v = t.param(x);
    return t.record(Tensor<double>({1}, {std::log(v.value()[0])}), true, nullptr);
  };
  EXPECT_THROW(grad_check<double>(f, ps), NumericalError);
}

TEST(GradCheck, EveryOpAgainstFiniteDifferences) {
  std::mt19937_64 rng(11);
  Parameter<double> A("A", random_tensor<double>(rng, {3, 4}));
  Parameter<double> B("B", random_tensor<double>(rng, {4, 2}));
  Parameter<double> x("x", random_tensor<double>(rng, {4}));
  Parameter<double> y("y", random_tensor<double>(rng, {3}));
  Parameter<double> w("w", random_tensor<double>(rng, {3}));
  Parameter<double>* ps[] = {&A, &B, &x, &y, &w};
  auto f = [&](Tape<double>& t) {
    auto a = t.param(A), b = t.param(B), xv = t.param(x), yv = t.param(y), wv = t.param(w);
    auto h = tanh(add(matvec(a, xv), yv));                       // [3]
    auto g = sigmoid(scale(h, 0.7) * wv);                        // [3]
    auto mm = matmul(a, b);                                      // [3x2]
    auto ws = weighted_sum(mm, softmax(g));                      // [2]
    auto c = concat<double>({ws, g, h});                         // [8]
    auto m = mean<double>({c, c * c});
    auto p = softmax(m);
    return add(nll(p, 5), sum(apply_dropout(h, Tensor<double>::vector({2.0, 0.0, 2.0}))));
  };
  auto r = grad_check<double>(f, ps);
  EXPECT_TRUE(r.passed) << r.worst_param << "[" << r.worst_index << "] rel " << r.max_rel_error;
  EXPECT_LE(r.max_rel_error, 1e-6);
}

TEST(Tape, BackwardVisitsEachOpOnceAndSkipsConstants) {
  Tape<double> t;
  Parameter<double> p("p", Tensor<double>::vector({1.0, 2.0}));
  auto c = t.constant(Tensor<double>::vector({3.0, 4.0}));
  auto cc = mul(c, c);                     // constant subgraph: never visited
  auto v = add(mul(t.param(p), c), cc);    // 2 ops needing grad
  auto loss = sum(v);                      // 1 op
  EXPECT_EQ(t.backward(loss), 3u);
  EXPECT_EQ(t.param_grad(p), c.value());
  // A second backward recomputes from scratch rather than accumulating.
  EXPECT_EQ(t.backward(loss), 3u);
  EXPECT_EQ(t.param_grad(p), c.value());
}

TEST(Tape, SharedParameterAccumulates) {
  Tape<double> t;
  Parameter<double> p("p", Tensor<double>::vector({2.0}));
  auto a = t.param(p), b = t.param(p);
  EXPECT_EQ(a.id, b.id);
  t.backward(sum(add(a, b)));
  EXPECT_DOUBLE_EQ(t.param_grad(p)[0], 2.0);
  Parameter<double>* ps[] = {&p};
  t.accumulate_into(ps);
  t.accumulate_into(ps);
  EXPECT_DOUBLE_EQ(p.grad[0], 4.0);
}

TEST(Tape, BackwardNeedsScalar) {
  Tape<double> t;
  Parameter<double> p("p", Tensor<double>::vector({1.0, 2.0}));
  EXPECT_THROW(t.backward(t.param(p)), DimensionError);
}

TEST(Ops, NllValueGradientAndRange) {
  Tape<double> t;
  Parameter<double> z("z", Tensor<double>({6}));
  auto p = softmax(t.param(z));
  auto loss = nll(p, 2);
  EXPECT_NEAR(loss.value()[0], 1.791759469228055, 1e-10);
  t.backward(loss);
  // d/dz of -log softmax(z)[k] is p - onehot(k).
  auto g = t.param_grad(z);
  for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(g[k], 1.0 / 6.0 - (k == 2 ? 1.0 : 0.0), 1e-10);
  EXPECT_THROW(nll(p, 6), DataError);
}
