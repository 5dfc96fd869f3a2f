#include <gtest/gtest.h>

#include <random>

#include "confjet/radial.hpp"
#include "confjet/series.hpp"
#include "test_util.hpp"

using namespace confjet;
using confjet::testing::random_series;
using RS = Series<Rational>;

TEST(Scalar, ParseRational) {
  EXPECT_EQ(parse_rational("3/6"), ratio(1, 2));
  EXPECT_EQ(parse_rational("-0.125"), ratio(-1, 8));
  EXPECT_EQ(parse_rational("1e-3"), ratio(1, 1000));
  EXPECT_EQ(parse_rational("2.5E2"), Rational(250));
  EXPECT_EQ(parse_rational(" 7 "), Rational(7));
  EXPECT_THROW(parse_rational("abc"), usage_error);
  EXPECT_THROW(parse_rational("1/0"), usage_error);
}

TEST(Series, DifferenceOfSquares) {
  auto x = RS::variable(2, 2, 0);
  auto one = RS::constant(2, 2, 1);
  auto p = (one + x) * (one - x);
  EXPECT_EQ(p.coefficient({0, 0}), 1);
  EXPECT_EQ(p.coefficient({2, 0}), -1);
  EXPECT_EQ(p.coefficient({1, 0}), 0);
  EXPECT_EQ(p.cap(), 2);
}

TEST(Series, TruncationContract) {
  auto x = RS::variable(2, 1, 0);
  auto one = RS::constant(2, 1, 1);
  auto p = (one + x) * (one - x);
  EXPECT_EQ(p.cap(), 1);
  EXPECT_EQ(p, RS::constant(2, 1, 1));
}

TEST(Series, ProductCapIsMinimum) {
  auto a = RS::constant(3, 4, 2);
  auto b = RS::constant(3, 2, 3);
  EXPECT_EQ((a * b).cap(), 2);
  EXPECT_EQ((a + b).cap(), 2);
}

TEST(Series, ProductMatchesEvaluation) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = random_series<Rational>(rng, 3, 6, 3);
    auto b = random_series<Rational>(rng, 3, 6, 3);
    std::vector<Rational> pt = {ratio(1, 3), ratio(-2, 5), ratio(7, 2)};
    EXPECT_EQ((a * b).evaluate(pt), a.evaluate(pt) * b.evaluate(pt));
  }
}

TEST(Series, MismatchedVariablesRejected) {
  auto a = RS::constant(2, 2, 1);
  auto b = RS::constant(3, 2, 1);
  EXPECT_THROW(a * b, usage_error);
  EXPECT_THROW(a + b, usage_error);
}

TEST(Series, Partial) {
  auto s = RS::zero(2, 3);
  s.set_coefficient({2, 1}, 1);
  auto d = s.partial(0);
  EXPECT_EQ(d.cap(), 2);
  EXPECT_EQ(d.coefficient({1, 1}), 2);
  EXPECT_TRUE(RS::constant(2, 3, 5).partial(1).is_zero());
  EXPECT_THROW(s.partial(2), usage_error);
  EXPECT_THROW(RS::constant(2, 0, 1).partial(0), insufficient_degree);
}

TEST(Series, MixedPartialsCommute) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = random_series<Rational>(rng, 4, 5, 5);
    EXPECT_EQ(a.partial(0).partial(2), a.partial(2).partial(0));
    EXPECT_EQ(a.partial(1).partial(3), a.partial(3).partial(1));
  }
}

TEST(Series, RingAxiomsExact) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = random_series<Rational>(rng, 3, 4, 4);
    auto b = random_series<Rational>(rng, 3, 4, 4);
    auto c = random_series<Rational>(rng, 3, 4, 4);
    EXPECT_EQ((a * b) * c, a * (b * c));
    EXPECT_EQ(a * (b + c), a * b + a * c);
    EXPECT_EQ(a * b, b * a);
  }
}

TEST(Series, TruncationCommutesWithProduct) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = random_series<Rational>(rng, 2, 6, 6);
    auto b = random_series<Rational>(rng, 2, 6, 6);
    EXPECT_EQ(a.truncated(3) * b.truncated(3), (a * b).truncated(3));
  }
}

TEST(Series, ElementaryFunctions) {
  std::mt19937 rng(9);
  auto u = random_series<Rational>(rng, 2, 5, 5);
  u[0] = 0;
  auto one = RS::constant(2, 5, 1);
  EXPECT_EQ(exp(log(one + u)), one + u);
  EXPECT_EQ(log(exp(u)), u);
  auto a = one + u;
  EXPECT_EQ(sqrt(a * a), a);
  auto s = sqrt(RS::constant(2, 5, 4) + u);
  EXPECT_EQ(s * s, RS::constant(2, 5, 4) + u);
  EXPECT_EQ(reciprocal(a) * a, one);
  EXPECT_EQ(pow(a, -2) * a * a, one);
  EXPECT_THROW(sqrt(RS::constant(2, 5, 2)), usage_error);
}

TEST(Series, GeometricSeriesReciprocal) {
  auto x = RS::variable(1, 4, 0);
  auto r = reciprocal(RS::constant(1, 4, 1) + x);
  for (int k = 0; k <= 4; ++k) EXPECT_EQ(r.coefficient({k}), k % 2 ? -1 : 1);
}

TEST(Series, FloatBackendAgreesWithRational) {
  std::mt19937 rng(2);
  auto a = random_series<Rational>(rng, 3, 4, 4);
  auto b = random_series<Rational>(rng, 3, 4, 4);
  auto ab = a * b;
  auto to_float = [](const RS& s) {
    auto f = Series<double>::zero(s.nvars(), s.cap());
    for (std::size_t i = 0; i < s.size(); ++i) f[i] = s[i].get_d();
    return f;
  };
  auto fab = to_float(a) * to_float(b);
  for (std::size_t i = 0; i < ab.size(); ++i) EXPECT_NEAR(fab[i], ab[i].get_d(), 1e-12);
}

TEST(Series, SliceAndEmbed) {
  std::mt19937 rng(4);
  auto a = random_series<Rational>(rng, 2, 4, 4);
  auto lifted = a.embedded_last(2, 6);
  EXPECT_EQ(lifted.nvars(), 3);
  EXPECT_EQ(lifted.slice_last(2), a);
  EXPECT_TRUE(lifted.slice_last(1).is_zero());
  EXPECT_EQ(lifted.times_variable(2).divided_by_variable(2), lifted);
  EXPECT_THROW(a.divided_by_variable(0), usage_error);
}

TEST(RadialSeries, XDerivativeBookkeeping) {
  // d/dx(x^k) * x = k x^k
  for (int k = 1; k <= 5; ++k) {
    auto xk = RS::constant(1, 6, 1);
    for (int i = 0; i < k; ++i) xk = xk.times_variable(0).truncated(6);
    RadialSeries<Rational> r(xk);
    auto back = r.x_derivative().times_x();
    EXPECT_EQ(back.regular(), (xk * Rational(k)).truncated(back.cap()));
  }
}

TEST(RadialSeries, LogDerivative) {
  // d/dx(x^3 log x) = 3 x^2 log x + x^2
  auto x3 = RS::variable(1, 5, 0);
  x3 = (x3 * x3 * x3);
  RadialSeries<Rational> r(RS::zero(1, 5), x3);
  auto d = r.x_derivative();
  EXPECT_EQ(d.coefficient(2, 0).constant_term(), 1);
  EXPECT_EQ(d.coefficient(2, 1).constant_term(), 3);
  EXPECT_TRUE(d.coefficient(1, 0).is_zero());
}

TEST(RadialSeries, SecondLogPowerRejected) {
  auto x = RS::variable(1, 4, 0);
  RadialSeries<Rational> a(RS::zero(1, 4), x);
  EXPECT_THROW(a * a, usage_error);
  auto x3 = x * x * x;
  RadialSeries<Rational> b(RS::zero(1, 4), x3);
  EXPECT_TRUE((b * b).is_zero());
}
