#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "test_support.hpp"
#include "tet/grad_check.hpp"
#include "tet/pooling_loss.hpp"

namespace tet {
namespace {

using testing::random_matrix;

TEST(Pooling, SingleSourceIsExactIdentity) {
  const std::vector<double> s{0.3, -7.25, 12.0};
  EXPECT_EQ(pool_scores({s}, 0.5), s);
}

TEST(Pooling, ZeroAlphaIsArithmeticMean) {
  const auto out = pool_scores({{1, 4}, {3, -2}, {5, 1}}, 0.0);
  EXPECT_NEAR(out[0], 3.0, 1e-12);
  EXPECT_NEAR(out[1], 1.0, 1e-12);
}

TEST(Pooling, TwoSourceExample) {
  Tape<double> tape(false);
  auto scores = tape.constant(Tensor<double>(Shape{2, 1}, std::vector<double>{2, 0}));
  const auto w = exp_pool_weights(scores, 0.5).value();
  EXPECT_NEAR(w[0], 0.7311, 5e-5);
  EXPECT_NEAR(w[1], 0.2689, 5e-5);
  EXPECT_NEAR(exp_weighted_pool(scores, 0.5).value()[0], 1.4621, 5e-5);
}

TEST(Pooling, EmptyScoreSetIsContractViolation) {
  EXPECT_THROW(pool_scores({}, 0.5), ContractViolation);
  Tape<double> tape(false);
  EXPECT_THROW(exp_pool_weights(tape.constant(Tensor<double>(Shape{0, 3})), 0.5), ContractViolation);
}

TEST(Pooling, WeightsSumToOneAndPooledValueIsBracketed) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 9, L = 1 + rng() % 12;
    const double alpha = std::uniform_real_distribution<double>(-5, 5)(rng);
    Tape<double> tape(false);
    auto s = tape.constant(random_matrix<double>(n, L, rng, -20, 20));
    // Copies: recording further nodes may move tape storage.
    const auto w = exp_pool_weights(s, alpha).value();
    const auto pooled = exp_weighted_pool(s, alpha).value();
    for (std::size_t k = 0; k < L; ++k) {
      double sum = 0, lo = INFINITY, hi = -INFINITY;
      for (std::size_t i = 0; i < n; ++i) {
        sum += w(i, k);
        lo = std::min(lo, s.value()(i, k));
        hi = std::max(hi, s.value()(i, k));
      }
      ASSERT_NEAR(sum, 1.0, 1e-6);
      ASSERT_GE(pooled[k], lo - 1e-12);
      ASSERT_LE(pooled[k], hi + 1e-12);
    }
  }
}

TEST(Pooling, LargeAlphaApproachesMax) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    // Sources separated by at least 1 per type.
    const std::size_t n = 2 + rng() % 5, L = 6;
    std::vector<std::vector<double>> src(n, std::vector<double>(L));
    for (std::size_t k = 0; k < L; ++k) {
      std::vector<double> col(n);
      for (std::size_t i = 0; i < n; ++i) col[i] = static_cast<double>(i) * (1.0 + (rng() % 100) / 100.0);
      std::shuffle(col.begin(), col.end(), rng);
      for (std::size_t i = 0; i < n; ++i) src[i][k] = col[i] - 3.0;
    }
    const auto pooled = pool_scores(src, 1e3);
    for (std::size_t k = 0; k < L; ++k) {
      double mx = -INFINITY;
      for (const auto& s : src) mx = std::max(mx, s[k]);
      ASSERT_NEAR(pooled[k], mx, 1e-3);
    }
  }
}

TEST(Pooling, OrderInvariance) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 6, L = 5;
    std::vector<std::vector<double>> src(n, std::vector<double>(L));
    for (auto& s : src)
      for (auto& v : s) v = std::uniform_real_distribution<double>(-4, 4)(rng);
    const auto base = pool_scores(src, 0.5);
    std::shuffle(src.begin(), src.end(), rng);
    const auto shuffled = pool_scores(src, 0.5);
    ASSERT_EQ(shuffled, base);
  }
}

TEST(Pooling, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  ParameterStore<double> store;
  store.add("s", random_matrix<double>(4, 6, rng, -3, 3));
  const auto proj = random_matrix<double>(1, 6, rng);
  const LossFn loss = [&](ParamBinder<double>& bind) {
    return ops::sum(ops::mul(exp_weighted_pool(bind(0), 0.7), bind.tape().constant(proj)));
  };
  EXPECT_TRUE(grad_check(loss, store).passed(1e-6));
}

TEST(Sigmoid, Identities) {
  Tape<double> tape(false);
  auto x = tape.constant(Tensor<double>::row({0.0, -3.0, 3.0, 10.0, 20.0}));
  const auto& p = to_probabilities(x).value();
  EXPECT_EQ(p[0], 0.5);
  EXPECT_NEAR(p[1], 1.0 - p[2], 1e-12);
  EXPECT_LT(p[2], p[3]);
  EXPECT_LT(p[3], p[4]);
  EXPECT_LE(p[4], 1.0);
}

TEST(SfnaWeight, Endpoints) {
  EXPECT_EQ(sfna_weight(0.0), 0.0);
  EXPECT_EQ(sfna_weight(1.0), 0.0);
  EXPECT_EQ(sfna_weight(0.5), 1.0);
}

TEST(SfnaWeight, QuarterPointsAgree) {
  EXPECT_DOUBLE_EQ(sfna_weight(0.25), 0.625);
  EXPECT_DOUBLE_EQ(sfna_weight(0.75), 0.625);
}

TEST(SfnaWeight, BranchesMeetAtHalf) {
  const double left = 3 * 0.5 - 2 * 0.25;
  const double right = 0.5 - 2 * 0.25 + 1;
  EXPECT_LT(std::abs(left - right), 1e-12);
  EXPECT_LT(std::abs(sfna_weight(std::nextafter(0.5, 1.0)) - sfna_weight(0.5)), 1e-12);
}

TEST(SfnaWeight, SymmetricBoundedGrid) {
  for (int i = 0; i <= 1000; ++i) {
    const double x = i / 1000.0;
    ASSERT_LT(std::abs(sfna_weight(x) - sfna_weight(1.0 - x)), 1e-12) << x;
    ASSERT_GE(sfna_weight(x), 0.0);
    ASSERT_LE(sfna_weight(x), 1.0);
  }
}

TEST(SfnaWeight, OutOfRangeIsArgumentError) {
  EXPECT_THROW(sfna_weight(-0.01), ArgumentError);
  EXPECT_THROW(sfna_weight(1.01), ArgumentError);
  EXPECT_THROW(sfna_weight(std::nan("")), ArgumentError);
}

TEST(SfnaWeight, DerivativeMatchesFiniteDifference) {
  for (double x : {0.1, 0.3, 0.49, 0.51, 0.7, 0.9}) {
    const double h = 1e-6;
    EXPECT_NEAR(sfna_weight_derivative(x), (sfna_weight(x + h) - sfna_weight(x - h)) / (2 * h), 1e-6);
    EXPECT_NEAR(fna_weight_derivative(x), (fna_weight(x + h) - fna_weight(x - h)) / (2 * h), 1e-6);
  }
}

TEST(FnaWeight, SmoothBump) {
  EXPECT_EQ(fna_weight(0.0), 0.0);
  EXPECT_EQ(fna_weight(1.0), 0.0);
  EXPECT_EQ(fna_weight(0.5), 1.0);
}

LossConfig kind(LossKind k) {
  LossConfig c;
  c.kind = k;
  return c;
}

TEST(Loss, SinglePositiveAtHalf) {
  const std::vector<double> p{0.5};
  const std::vector<std::uint8_t> y{1};
  for (auto k : {LossKind::bce, LossKind::fna, LossKind::sfna})
    EXPECT_NEAR(loss_value(p, y, kind(k)), 0.6931, 5e-5);
}

TEST(Loss, SingleNegativeAtHalf) {
  const std::vector<double> p{0.5};
  const std::vector<std::uint8_t> y{0};
  EXPECT_NEAR(loss_value(p, y, kind(LossKind::sfna)), 0.6931, 5e-5);
  EXPECT_NEAR(loss_value(p, y, kind(LossKind::bce)), std::log(2.0), 1e-15);
}

TEST(Loss, PerfectPredictionApproachesZero) {
  const std::vector<double> p{1.0, 0.0, 1.0, 0.0};
  const std::vector<std::uint8_t> y{1, 0, 1, 0};
  for (auto k : {LossKind::bce, LossKind::fna, LossKind::sfna}) EXPECT_LT(loss_value(p, y, kind(k)), 1e-6);
}

TEST(Loss, ClampKeepsLossFinite) {
  const std::vector<double> p{0.0, 1.0};
  const std::vector<std::uint8_t> y{1, 0};
  for (auto k : {LossKind::bce, LossKind::fna, LossKind::sfna})
    EXPECT_TRUE(std::isfinite(loss_value(p, y, kind(k))));
  EXPECT_NEAR(loss_value(p, y, kind(LossKind::bce)), -2 * std::log(1e-7), 1e-6);
}

TEST(Loss, LabelLengthMismatchIsContractViolation) {
  const std::vector<double> p{0.5, 0.5};
  const std::vector<std::uint8_t> y{1};
  EXPECT_THROW(loss_value(p, y, kind(LossKind::sfna)), ContractViolation);
}

TEST(Loss, SfnaNeverExceedsBce) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const std::size_t L = 1 + rng() % 8;
    std::vector<double> p(L);
    std::vector<std::uint8_t> y(L);
    for (std::size_t k = 0; k < L; ++k) {
      p[k] = u(rng);
      y[k] = static_cast<std::uint8_t>(rng() % 2);
    }
    ASSERT_LE(loss_value(p, y, kind(LossKind::sfna)), loss_value(p, y, kind(LossKind::bce)));
  }
}

TEST(Loss, PluggableFnaWeight) {
  LossConfig c = kind(LossKind::fna);
  c.fna = {[](double) { return 0.25; }, [](double) { return 0.0; }};
  const std::vector<double> p{0.5};
  const std::vector<std::uint8_t> y{0};
  EXPECT_NEAR(loss_value(p, y, c), 0.25 * std::log(2.0), 1e-15);
}

TEST(TypeLoss, FrozenWeightGradientClosedForm) {
  // d/dp of −w(p)·log(1−p) with w held constant is w(p)/(1−p); positives give −1/p.
  const std::vector<double> p{0.2, 0.7, 0.4, 0.9};
  const std::vector<std::uint8_t> y{1, 0, 0, 1};
  for (auto k : {LossKind::bce, LossKind::fna, LossKind::sfna}) {
    const LossConfig c = kind(k);
    ASSERT_TRUE(c.stop_weight_gradient);
    Tape<double> tape;
    auto probs = tape.leaf(Tensor<double>::row(p));
    auto loss = type_loss(probs, y, c);
    EXPECT_DOUBLE_EQ(loss.value()[0], loss_value(p, y, c));
    tape.backward(loss);
    const auto& g = tape.grad(probs);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double expected = y[i] ? -1.0 / p[i] : c.negative_weight(p[i]) / (1.0 - p[i]);
      EXPECT_NEAR(g[i], expected, 1e-12) << loss_kind_name(k) << " i=" << i;
    }
  }
}

TEST(TypeLoss, FullWeightGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  ParameterStore<double> store;
  store.add("logits", random_matrix<double>(1, 12, rng, -3, 3));
  std::vector<std::uint8_t> y(12);
  for (auto& v : y) v = static_cast<std::uint8_t>(rng() % 3 == 0);
  for (auto k : {LossKind::bce, LossKind::fna, LossKind::sfna}) {
    LossConfig c = kind(k);
    c.stop_weight_gradient = false;
    const LossFn loss = [&](ParamBinder<double>& bind) { return type_loss(to_probabilities(bind(0)), y, c); };
    const auto r = grad_check(loss, store);
    EXPECT_TRUE(r.passed(1e-6)) << loss_kind_name(k) << " " << r.max_rel_error;
  }
}

TEST(TypeLoss, KindNamesRoundTrip) {
  for (auto k : {LossKind::bce, LossKind::fna, LossKind::sfna}) EXPECT_EQ(parse_loss_kind(loss_kind_name(k)), k);
  EXPECT_THROW(parse_loss_kind("hinge"), ArgumentError);
}

}  // namespace
}  // namespace tet
