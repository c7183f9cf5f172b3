#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "pfn/error.hpp"
#include "pfn/grad_check.hpp"
#include "pfn/tape.hpp"
#include "support.hpp"

namespace pfn {
namespace {

std::vector<double> values(const Tape& tape, Var v) {
  auto s = tape.value(v);
  return {s.begin(), s.end()};
}

TEST(Linear, IdentityPassesInputThrough) {
  Tape tape;
  Var y = tape.linear(tape.constant({1, 0}), tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1})),
                      tape.constant({0, 0}));
  EXPECT_EQ(values(tape, y), (std::vector<double>{1, 0}));
}

TEST(Linear, ZeroInputReturnsBias) {
  Tape tape;
  Var y = tape.linear(tape.constant({0, 0}), tape.constant(Tensor::matrix(2, 2, {5, -2, 7, 3})),
                      tape.constant({3, -1}));
  EXPECT_EQ(values(tape, y), (std::vector<double>{3, -1}));
}

TEST(Linear, HandEvaluatedProduct) {
  Tape tape;
  Var y = tape.linear(tape.constant({1, 2}), tape.constant(Tensor::matrix(2, 2, {1, 1, 2, 0})),
                      tape.constant({0, 1}));
  EXPECT_EQ(values(tape, y), (std::vector<double>{3, 3}));
}

TEST(Linear, ShapeMismatchThrows) {
  Tape tape;
  EXPECT_THROW(tape.linear(tape.constant({1, 2, 3}), tape.constant(Tensor::matrix(2, 2, {1, 1, 2, 0})),
                           tape.constant({0, 1})),
               DimensionError);
  EXPECT_THROW(tape.linear(tape.constant({1, 2}), tape.constant(Tensor::matrix(2, 2, {1, 1, 2, 0})),
                           tape.constant({0, 1, 2})),
               DimensionError);
}

TEST(Cummax, SymmetricPair) {
  Tape tape;
  auto v = values(tape, tape.cummax(tape.constant({0, 0})));
  EXPECT_DOUBLE_EQ(v[0], 0.5);
  EXPECT_DOUBLE_EQ(v[1], 1.0);
}

TEST(Cummax, SaturatedFirstLogit) {
  Tape tape;
  for (double x : values(tape, tape.cummax(tape.constant({1000, 0, 0})))) EXPECT_NEAR(x, 1.0, 1e-9);
}

TEST(Cummax, MatchesExtendedPrecisionOracle) {
  const long double logits[] = {0.3L, -1.2L, 0.5L};
  long double total = 0;
  for (long double z : logits) total += std::exp(z);
  long double running = 0;
  Tape tape;
  auto v = values(tape, tape.cummax(tape.constant({0.3, -1.2, 0.5})));
  for (int i = 0; i < 3; ++i) {
    running += std::exp(logits[i]) / total;
    EXPECT_NEAR(v[i], static_cast<double>(running), 1e-15);
  }
}

TEST(Cummax, RandomLogitsAreMonotoneBoundedAndEndAtOne) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    Tape tape;
    auto v = values(tape, tape.cummax(tape.constant(test::uniform(n, rng, -30, 30))));
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_GE(v[i], 0.0);
      EXPECT_LE(v[i], 1.0);
      if (i > 0) EXPECT_GE(v[i], v[i - 1]);
    }
    EXPECT_NEAR(v.back(), 1.0, 1e-12);
  }
}

TEST(Cummax, LargeTemperatureGivesBinaryGate) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    auto logits = test::uniform(8, rng);
    for (auto& z : logits) z *= 1e4;
    Tape tape;
    for (double x : values(tape, tape.cummax(tape.constant(logits)))) {
      EXPECT_LT(std::min(std::abs(x), std::abs(1.0 - x)), 1e-6);
    }
  }
}

TEST(Cummax, SuffixSumIsOneMinusCummax) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const auto logits = test::uniform(1 + rng() % 9, rng, -5, 5);
    Tape tape;
    Var x = tape.constant(logits);
    auto direct = values(tape, tape.one_minus(tape.cummax(x)));
    auto suffix = values(tape, tape.one_minus_cummax(x));
    for (std::size_t i = 0; i < logits.size(); ++i) EXPECT_NEAR(direct[i], suffix[i], 1e-14);
    EXPECT_EQ(suffix.back(), 0.0);
  }
}

TEST(Elementwise, HandValues) {
  Tape tape;
  Var a = tape.constant({1, 2});
  Var b = tape.constant({3, 4});
  EXPECT_EQ(values(tape, tape.elementwise("hadamard", a, b)), (std::vector<double>{3, 8}));
  EXPECT_EQ(values(tape, tape.elementwise("add", a, b)), (std::vector<double>{4, 6}));
  EXPECT_EQ(values(tape, tape.elementwise("sub", a, b)), (std::vector<double>{-2, -2}));
  EXPECT_EQ(values(tape, tape.elementwise("tanh", tape.constant({0.0}))), (std::vector<double>{0.0}));
  EXPECT_EQ(values(tape, tape.elementwise("sigmoid", tape.constant({0.0}))), (std::vector<double>{0.5}));
  EXPECT_EQ(values(tape, tape.elementwise("one_minus", a)), (std::vector<double>{0, -1}));
  auto e = values(tape, tape.elementwise("elu", tape.constant({-1.0, 2.0})));
  EXPECT_DOUBLE_EQ(e[0], std::expm1(-1.0));
  EXPECT_DOUBLE_EQ(e[1], 2.0);
}

TEST(Elementwise, Errors) {
  Tape tape;
  Var a = tape.constant({1, 2});
  EXPECT_THROW(tape.elementwise("hadamard", a, tape.constant({1, 2, 3})), DimensionError);
  EXPECT_THROW(tape.elementwise("add", a), DimensionError);
  EXPECT_THROW(tape.elementwise("cosh", a), Error);
}

TEST(Tape, NonFiniteValuesAreRejected) {
  Tape tape;
  EXPECT_THROW(tape.constant({std::nan("")}), NumericError);
  Var big = tape.constant({1e308});
  EXPECT_THROW(tape.add(big, big), NumericError);
}

TEST(Tape, BackwardVisitsEveryRecordOnce) {
  std::mt19937_64 rng(14);
  Tensor w = test::random_tensor({3, 3}, rng);
  w.enable_grad();
  Tape tape;
  Var x = tape.constant({0.1, 0.2, 0.3});
  Var h = tape.tanh(tape.linear(x, tape.parameter(w), Var{}));
  Var loss = tape.sum(tape.hadamard(h, tape.cummax(h)));
  tape.backward(loss);
  EXPECT_EQ(tape.last_backward_visits(), tape.size());
}

TEST(GradCheck, QuadraticIsExact) {
  Tensor theta = Tensor::vector({3.0});
  auto report = grad_check(
      [&](Tape& t) {
        Var p = t.parameter(theta);
        return t.sum(t.hadamard(p, p));
      },
      {{"theta", &theta}});
  ASSERT_EQ(report.entries.size(), 1u);
  EXPECT_NEAR(report.entries[0].analytic_at_worst, 6.0, 1e-12);
  EXPECT_NEAR(report.entries[0].numeric_at_worst, 6.0, 1e-7);
  EXPECT_TRUE(report.passed());
}

TEST(GradCheck, ConstantFunctionHasZeroGradient) {
  Tensor theta = Tensor::vector({0.5, -2.0});
  auto report = grad_check(
      [&](Tape& t) {
        t.parameter(theta);
        return t.sum(t.constant({1.0, 2.0}));
      },
      {{"theta", &theta}});
  for (double g : theta.grad()) EXPECT_NEAR(g, 0.0, 1e-9);
  EXPECT_NEAR(report.entries[0].numeric_at_worst, 0.0, 1e-9);
  EXPECT_TRUE(report.passed());
}

TEST(GradCheck, NondeterministicObjectiveFails) {
  Tensor theta = Tensor::vector({1.0});
  double drift = 0.0;
  auto report = grad_check(
      [&](Tape& t) {
        drift += 1.0;
        return t.sum(t.scale(t.parameter(theta), drift));
      },
      {{"theta", &theta}});
  EXPECT_FALSE(report.deterministic);
  EXPECT_FALSE(report.passed());
}

TEST(GradCheck, RelativeErrorUsesFloor) {
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-10), 1e-10 / 1e-8);
}

// Random chains of differentiable primitives over a vector and a matrix.
TEST(GradCheck, RandomCompositions) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng() % 4;
    Tensor x = test::random_tensor({n}, rng);
    Tensor w = test::random_tensor({n, n}, rng);
    Tensor b = test::random_tensor({n}, rng);
    std::vector<int> ops;
    for (int k = 0; k < 6; ++k) ops.push_back(static_cast<int>(rng() % 9));
    auto objective = [&](Tape& t) {
      Var h = t.parameter(x);
      Var wv = t.parameter(w);
      Var bv = t.parameter(b);
      for (int op : ops) {
        switch (op) {
          case 0: h = t.tanh(t.linear(h, wv, bv)); break;
          case 1: h = t.sigmoid(h); break;
          case 2: h = t.elu(t.add(h, bv)); break;
          case 3: h = t.cummax(h); break;
          case 4: h = t.hadamard(h, t.one_minus_cummax(t.scale(h, 2.0))); break;
          case 5: h = t.softmax(t.sub(h, bv)); break;
          case 6: h = t.cumsum(h); break;
          case 7: {
            const std::vector<Var> top{h, bv};
            const std::vector<Var> bottom{bv, h};
            h = t.row(t.col_block(t.concat_cols(t.stack_rows(top), t.stack_rows(bottom)), 1, n), 1);
            break;
          }
          default: h = t.add(t.suffix_sum(h), t.tile(t.cumsum(h), 1)); break;
        }
        h = t.tanh(h);
      }
      return t.sum(t.hadamard(h, h));
    };
    auto report = grad_check(objective, {{"x", &x}, {"w", &w}, {"b", &b}});
    EXPECT_TRUE(report.passed()) << "trial " << trial << " worst " << report.max_rel_error();
  }
}

}  // namespace
}  // namespace pfn
