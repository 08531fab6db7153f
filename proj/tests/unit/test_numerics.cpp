#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gtd/autodiff.hpp"
#include "gtd/gradcheck.hpp"
#include "gtd/gradsuite.hpp"

using namespace gtd;

namespace {

Tensor random_tensor(Dims dims, Rng& rng) {
  Tensor t(std::move(dims));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Direct definition: out[c,n] = b[c] + sum_{i,k} w[c,i,k] x[i, n + (k - (K-1)/2) d], zero outside.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, int d) {
  const long n = static_cast<long>(x.dim(1)), k = static_cast<long>(w.dim(2));
  Tensor out({w.dim(0), x.dim(1)});
  for (std::size_t c = 0; c < w.dim(0); ++c) {
    for (long t = 0; t < n; ++t) {
      double s = b[c];
      for (std::size_t i = 0; i < w.dim(1); ++i) {
        for (long j = 0; j < k; ++j) {
          const long src = t + (j - (k - 1) / 2) * d;
          if (src >= 0 && src < n) s += w.at(c, i, static_cast<std::size_t>(j)) * x.at(i, static_cast<std::size_t>(src));
        }
      }
      out.at(c, static_cast<std::size_t>(t)) = s;
    }
  }
  return out;
}

}  // namespace

TEST(Tensor, RejectsZeroExtentAndSizeMismatch) {
  EXPECT_THROW(Tensor({0, 3}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.transposed().dims(), (Dims{3, 2}));
}

TEST(Conv1d, HandExamples) {
  const Tensor x({1, 4}, {1, 2, 3, 4});
  const Tensor w({1, 1, 3}, {1, 0, -1});
  const Tensor b({1}, 0.0);
  EXPECT_EQ(kernels::conv1d_dilated(x, w, b, 1).storage(), (std::vector<double>{-2, -2, -2, 3}));
  EXPECT_EQ(kernels::conv1d_dilated(x, w, b, 2).storage(), (std::vector<double>{-3, -4, 1, 2}));
}

TEST(Conv1d, ZeroKernelGivesZero) {
  Rng rng(1);
  const Tensor x = random_tensor({3, 7}, rng);
  const Tensor out = kernels::conv1d_dilated(x, Tensor({2, 3, 3}), Tensor({2}), 2);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv1d, MatchesNaiveLoop) {
  Rng rng(2);
  for (int d : {1, 2, 4, 8}) {
    const Tensor x = random_tensor({3, 11}, rng), w = random_tensor({4, 3, 3}, rng), b = random_tensor({4}, rng);
    EXPECT_LT(max_abs_diff(kernels::conv1d_dilated(x, w, b, d), naive_conv(x, w, b, d)), 1e-13) << "d=" << d;
  }
  const Tensor x = random_tensor({2, 9}, rng), w = random_tensor({2, 2, 5}, rng), b = random_tensor({2}, rng);
  EXPECT_LT(max_abs_diff(kernels::conv1d_dilated(x, w, b, 3), naive_conv(x, w, b, 3)), 1e-13);
}

TEST(Conv1d, Linearity) {
  Rng rng(3);
  const Tensor x = random_tensor({3, 10}, rng), y = random_tensor({3, 10}, rng), w = random_tensor({2, 3, 3}, rng);
  const Tensor zero({2});
  const double a = 0.7, c = -1.3;
  Tensor mix(x.dims());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + c * y[i];
  const Tensor lhs = kernels::conv1d_dilated(mix, w, zero, 2);
  const Tensor cx = kernels::conv1d_dilated(x, w, zero, 2), cy = kernels::conv1d_dilated(y, w, zero, 2);
  for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], a * cx[i] + c * cy[i], 1e-12);
}

TEST(Conv1d, ArgumentErrors) {
  const Tensor x({2, 4});
  EXPECT_THROW(kernels::conv1d_dilated(x, Tensor({1, 3, 3}), Tensor({1}), 1), ShapeError);
  EXPECT_THROW(kernels::conv1d_dilated(x, Tensor({1, 2, 3}), Tensor({1}), 0), ShapeError);
}

TEST(Pointwise, Examples) {
  EXPECT_EQ(kernels::sigmoid(0.0), 0.5);
  Rng rng(4);
  Graph g(false);
  const Tensor xv = random_tensor({2, 5}, rng);
  Var x = g.leaf(xv);
  EXPECT_EQ(g.value(ops::mul(g, x, g.leaf(Tensor({2, 5}, 1.0)))), xv);
  EXPECT_EQ(g.value(ops::dropout(g, x, 0.5, rng, false)), xv);
  EXPECT_THROW(ops::add(g, x, g.leaf(Tensor({5, 2}))), ShapeError);
  EXPECT_THROW(ops::dropout(g, x, 1.0, rng, true), ConfigError);
}

TEST(Pointwise, NonFiniteIsSurfaced) {
  Graph g(false);
  Var x = g.leaf(Tensor({1, 1}, 1e200));
  EXPECT_THROW(ops::mul(g, x, x), NumericError);
}

TEST(Dropout, UnbiasedOverTrials) {
  Rng rng(5);
  const Tensor xv({1, 4}, {0.5, -1.0, 2.0, 0.25});
  const double rate = 0.3;
  const int trials = 10000;
  std::vector<double> sum(4, 0.0), sq(4, 0.0);
  for (int k = 0; k < trials; ++k) {
    Graph g(false);
    const Tensor& y = g.value(ops::dropout(g, g.leaf(xv), rate, rng, true));
    for (std::size_t i = 0; i < 4; ++i) {
      sum[i] += y[i];
      sq[i] += y[i] * y[i];
    }
  }
  for (std::size_t i = 0; i < 4; ++i) {
    const double mean = sum[i] / trials;
    const double var = sq[i] / trials - mean * mean;
    EXPECT_LT(std::abs(mean - xv[i]), 3.0 * std::sqrt(var / trials)) << i;
  }
}

TEST(Dropout, SurvivorsScaled) {
  Rng rng(6);
  Graph g(false);
  const Tensor& y = g.value(ops::dropout(g, g.leaf(Tensor({1, 200}, 1.0)), 0.25, rng, true));
  for (double v : y.data()) EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-15);
}

TEST(GradCheck, SumOfSquares) {
  TapeFn f = [](Graph& g, const std::vector<Var>& v) {
    return ops::weighted_mse(g, v[0], Tensor({1, 2}), std::vector<double>{1.0, 1.0});
  };
  // weighted_mse with C=1 and unit weights is sum of squares
  const auto r = grad_check(f, {Tensor({1, 2}, {1, 2})}, 1e-5);
  EXPECT_LT(r.max_relative_error, 1e-8);

  Graph g(true);
  Var x = g.leaf(Tensor({1, 2}, {1, 2}), true);
  g.backward(f(g, {x}));
  EXPECT_NEAR(g.grad(x)[0], 2.0, 1e-12);
  EXPECT_NEAR(g.grad(x)[1], 4.0, 1e-12);
}

TEST(GradCheck, ConstantMapHasZeroError) {
  auto value = [](const std::vector<Tensor>&) { return 3.0; };
  auto grad = [](const std::vector<Tensor>& xs) { return std::vector<Tensor>{Tensor(xs[0].dims())}; };
  EXPECT_EQ(grad_check(value, grad, {Tensor({3}, 1.0)}, 1e-5).max_relative_error, 0.0);
}

TEST(GradCheck, RejectsBadEpsAndNonFinite) {
  auto value = [](const std::vector<Tensor>& xs) { return xs[0][0]; };
  auto grad = [](const std::vector<Tensor>&) { return std::vector<Tensor>{Tensor({1}, 1.0)}; };
  EXPECT_THROW(grad_check(value, grad, {Tensor({1}, 1.0)}, 1e-2), ConfigError);
  EXPECT_THROW(grad_check(value, grad, {Tensor({1}, 1.0)}, 1e-9), ConfigError);
  auto bad = [](const std::vector<Tensor>&) { return std::nan(""); };
  EXPECT_THROW(grad_check(bad, grad, {Tensor({1}, 1.0)}, 1e-5), NumericError);
}

TEST(GradCheck, DetectsWrongGradient) {
  auto value = [](const std::vector<Tensor>& xs) { return xs[0][0] * xs[0][0]; };
  auto grad = [](const std::vector<Tensor>& xs) { return std::vector<Tensor>{Tensor({1}, 3.0 * xs[0][0])}; };
  EXPECT_GT(grad_check(value, grad, {Tensor({1}, 1.0)}, 1e-5).max_relative_error, 0.1);
}

TEST(GradCheck, EveryOperatorVjp) {
  // operator entries come first in the suite, network entries follow
  for (const auto& e : run_gradient_suite(21)) {
    if (e.name.rfind("stochastic", 0) == 0 || e.name.rfind("deterministic", 0) == 0) continue;
    EXPECT_LT(e.result.max_relative_error, 1e-6) << e.name;
  }
}

TEST(Graph, GradOfUnreachedLeafIsZero) {
  Graph g(true);
  Var a = g.leaf(Tensor({1}, 2.0), true);
  Var b = g.leaf(Tensor({1}, 5.0), true);
  Var s = ops::sum(g, {a});
  g.backward(s);
  EXPECT_EQ(g.grad(b)[0], 0.0);
  EXPECT_EQ(g.grad(a)[0], 1.0);
}
