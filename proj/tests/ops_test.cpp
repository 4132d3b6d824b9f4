#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "op_cases.hpp"
#include "test_support.hpp"
#include "tet/grad_check.hpp"
#include "tet/ops.hpp"

namespace tet {
namespace {

using testing::OpCase;
using testing::op_cases;
using testing::random_matrix;

std::vector<double> values_of(const Var<double>& v) { return v.value().values(); }

Var<double> constant_row(Tape<double>& tape, std::vector<double> v) {
  return tape.constant(Tensor<double>::row(std::move(v)));
}

TEST(Softmax, SymmetricPairIsUniform) {
  Tape<double> tape(false);
  auto y = values_of(ops::softmax(constant_row(tape, {0, 0}), 1));
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
}

TEST(Softmax, OneTwoThree) {
  Tape<double> tape(false);
  auto y = values_of(ops::softmax(constant_row(tape, {1, 2, 3}), 1));
  EXPECT_NEAR(y[0], 0.09003, 5e-6);
  EXPECT_NEAR(y[1], 0.24473, 5e-6);
  EXPECT_NEAR(y[2], 0.66524, 5e-6);
}

TEST(Softmax, LargeLogitDoesNotOverflow) {
  Tape<float> tape(false);
  auto y = ops::softmax(tape.constant(Tensor<float>::row({1000.0f, 0.0f})), 1).value();
  EXPECT_EQ(y[0], 1.0f);
  EXPECT_EQ(y[1], 0.0f);
}

TEST(Softmax, ColumnAxisNormalisesColumns) {
  Tape<double> tape(false);
  auto x = tape.constant(Tensor<double>(Shape{2, 2}, std::vector<double>{1, 5, 1, -5}));
  const auto& y = ops::softmax(x, 0).value();
  EXPECT_DOUBLE_EQ(y(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(y(1, 0), 0.5);
  EXPECT_NEAR(y(0, 1) + y(1, 1), 1.0, 1e-15);
  EXPECT_GT(y(0, 1), y(1, 1));
}

TEST(Softmax, SumsToOneOnExtremeInputs) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> mag(-3.0, 3.0);
  std::uniform_int_distribution<int> len(1, 40);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = static_cast<std::size_t>(len(rng));
    const double scale = std::pow(10.0, mag(rng));  // 1e-3 .. 1e3
    std::vector<float> v(n);
    std::normal_distribution<double> nd(0.0, scale);
    for (auto& x : v) x = static_cast<float>(nd(rng));
    Tape<float> tape(false);
    const auto& y = ops::softmax(tape.constant(Tensor<float>::row(v)), 1).value();
    double s = 0.0;
    for (float p : y.data()) {
      ASSERT_GE(p, 0.0f);
      s += p;
    }
    ASSERT_NEAR(s, 1.0, 1e-6) << "trial " << trial;
  }
}

TEST(LayerNorm, ConstantRowMapsToZero) {
  Tape<double> tape(false);
  auto y = ops::layer_norm(constant_row(tape, {5, 5, 5, 5}), constant_row(tape, {1, 1, 1, 1}),
                           constant_row(tape, {0, 0, 0, 0}));
  for (double v : values_of(y)) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, TwoPointRow) {
  Tape<double> tape(false);
  auto y = values_of(
      ops::layer_norm(constant_row(tape, {1, 3}), constant_row(tape, {1, 1}), constant_row(tape, {0, 0}), 1e-14));
  EXPECT_NEAR(y[0], -1.0, 1e-12);
  EXPECT_NEAR(y[1], 1.0, 1e-12);
}

TEST(LayerNorm, ZeroGainGivesBias) {
  Tape<double> tape(false);
  auto y = values_of(ops::layer_norm(constant_row(tape, {1, -2, 7}), constant_row(tape, {0, 0, 0}),
                                     constant_row(tape, {0.5, -1.5, 2})));
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], -1.5);
  EXPECT_DOUBLE_EQ(y[2], 2.0);
}

TEST(LayerNorm, RowsHaveZeroMeanUnitVariance) {
  std::mt19937_64 rng(3);
  Tape<double> tape(false);
  auto x = tape.constant(random_matrix<double>(6, 9, rng, -10, 10));
  auto y = ops::layer_norm(x, tape.constant(Tensor<double>::matrix(1, 9, 1.0)),
                           tape.constant(Tensor<double>::matrix(1, 9, 0.0)), 1e-12);
  for (std::size_t i = 0; i < 6; ++i) {
    double m = 0, v = 0;
    for (double e : y.value().row_span(i)) m += e;
    m /= 9;
    for (double e : y.value().row_span(i)) v += (e - m) * (e - m);
    EXPECT_NEAR(m, 0.0, 1e-5);
    EXPECT_NEAR(v / 9, 1.0, 1e-5);
  }
}

TEST(Dropout, EvalModeIsIdentity) {
  std::mt19937_64 rng(1);
  Tape<double> tape(false);
  auto x = constant_row(tape, {1, 2, 3});
  EXPECT_EQ(ops::dropout(x, 0.5, &rng, false).id(), x.id());
  EXPECT_EQ(ops::dropout(x, 0.0, &rng, true).id(), x.id());
}

TEST(Dropout, TrainModeScalesKeptUnits) {
  std::mt19937_64 rng(1);
  Tape<double> tape(false);
  auto x = tape.constant(Tensor<double>::matrix(1, 2000, 1.0));
  const auto& y = ops::dropout(x, 0.2, &rng, true).value();
  std::size_t kept = 0;
  for (double v : y.data()) {
    ASSERT_TRUE(v == 0.0 || std::abs(v - 1.25) < 1e-12);
    kept += v != 0.0;
  }
  EXPECT_NEAR(static_cast<double>(kept) / 2000.0, 0.8, 0.05);
}

TEST(Ops, ShapeMismatchIsContractViolation) {
  Tape<double> tape(false);
  auto a = constant_row(tape, {1, 2});
  auto b = constant_row(tape, {1, 2, 3});
  EXPECT_THROW(ops::add(a, b), ContractViolation);
  EXPECT_THROW(ops::matmul(a, b), ContractViolation);
  EXPECT_THROW(ops::softmax(a, 2), ContractViolation);
}

TEST(Ops, MaxMinRowsPickElementwise) {
  Tape<double> tape(false);
  auto x = tape.constant(Tensor<double>(Shape{2, 2}, std::vector<double>{1, 4, 3, 2}));
  EXPECT_EQ(values_of(ops::max_rows(x)), (std::vector<double>{3, 4}));
  EXPECT_EQ(values_of(ops::min_rows(x)), (std::vector<double>{1, 2}));
  EXPECT_EQ(values_of(ops::mean_rows(x)), (std::vector<double>{2, 3}));
}

TEST(Ops, PiecewiseOpsTraceTheirBranches) {
  std::uint64_t a = 0, b = 0;
  auto run = [](double v, std::uint64_t* trace) {
    ops::branch_trace = trace;
    Tape<double> tape(false);
    ops::relu(tape.constant(Tensor<double>::row({v, 1.0})));
    ops::branch_trace = nullptr;
  };
  run(0.3, &a);
  run(0.7, &b);
  EXPECT_NE(a, 0u);
  EXPECT_EQ(a, b);
  run(-0.3, &b);
  EXPECT_NE(a, b);
}

class PrimitiveGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(PrimitiveGradient, MatchesFiniteDifferences) {
  const OpCase c = op_cases()[GetParam()];
  for (std::uint64_t trial = 0; trial < 4; ++trial) {
    const auto report = testing::check_op(c, 100 * GetParam() + trial);
    ASSERT_TRUE(report.finite) << c.name;
    EXPECT_LT(report.max_rel_error, 1e-6) << c.name << " trial " << trial << " worst " << report.worst_param
                                          << "[" << report.worst_index << "]";
    EXPECT_GT(report.checked, 0u) << c.name;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, PrimitiveGradient, ::testing::Range<std::size_t>(0, op_cases().size()),
                         [](const auto& info) { return std::string(op_cases()[info.param].name); });

}  // namespace
}  // namespace tet
