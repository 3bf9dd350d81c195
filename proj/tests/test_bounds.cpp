#include <gtest/gtest.h>

#include <kernelbound/bounds.hpp>
#include <random>

using namespace kernelbound;

namespace {

ConstantsLedger ledger_with(std::array<double, 8> c, Window w, double s = 4) {
  ConstantsLedger L;
  L.c = c;
  L.window = w;
  L.s = s;
  return L;
}

FamilyParams coupled_poly() {
  Mat theta(2, 2), gamma(2, 2);
  theta << 1, 0.5, 0.5, 1;
  gamma << 2, 1, 1, 2;
  return FamilyParams::uniform(Growth::polynomial, 1, 2, Mat::Ones(1, 1), Mat::Zero(1, 1), Vec::Ones(1), Vec::Ones(1),
                               theta, gamma);
}

}  // namespace

TEST(EvalH, OnlyFirstConstant) {
  const auto L = ledger_with({1, 0, 0, 0, 0, 0, 0, 0}, {1, 2, 3, 4});
  auto zero = [](double) { return 0.0; };
  EXPECT_NEAR(eval_H(L, zero, zero), 6.0, 1e-12);
}

TEST(EvalH, MonotoneInEveryConstant) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  auto G = [](double t) { return 0.3 * t; };
  for (int r = 0; r < 20; ++r) {
    std::array<double, 8> c;
    for (auto& v : c) v = u(rng);
    const double base = eval_H(ledger_with(c, {0.1, 0.2, 0.4, 0.5}), G, G);
    for (int i = 0; i < 8; ++i) {
      auto bumped = c;
      bumped[i] *= 1.5;
      EXPECT_GT(eval_H(ledger_with(bumped, {0.1, 0.2, 0.4, 0.5}), G, G), base);
    }
  }
}

TEST(EvalH, RejectsBadWindow) {
  auto zero = [](double) { return 0.0; };
  EXPECT_THROW(eval_H(ledger_with({1, 0, 0, 0, 0, 0, 0, 0}, {1, 1, 3, 4}), zero, zero), DomainError);
}

TEST(SolveX0, Examples) {
  EXPECT_DOUBLE_EQ(solve_X0(0, 0, 0, 4), 0.0);
  EXPECT_NEAR(solve_X0(std::sqrt(0.75), 0.75, 0.75, 4), 3.0, 1e-14);
  EXPECT_NEAR(solve_X0(1, 0, 0, 4), std::pow(4.0 / 3.0, 0.25), 1e-14);
  EXPECT_NEAR(solve_X0(1, 0, 0, 4), 1.0746, 1e-4);
  EXPECT_THROW(solve_X0(-1, 0, 0, 4), DomainError);
}

TEST(SolveX0, NoSolutionAboveThreshold) {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (double s : {4.0, 6.0, 8.0})
    for (int r = 0; r < 200; ++r) {
      const double a = u(rng), b = u(rng), c = u(rng);
      const double x0 = solve_X0(a, b, c, s);
      for (int i = 1; i <= 400; ++i) {
        const double x = x0 * (1 + 3.0 * i / 400);
        const double f = std::pow(x, s) - a * std::pow(x, s / 2) - b * std::pow(x, s - 1) - c * std::pow(x, s - 2);
        ASSERT_GT(f, 0.0) << "s=" << s << " a=" << a << " b=" << b << " c=" << c << " x=" << x;
      }
    }
}

TEST(Lambda, Examples) {
  EXPECT_DOUBLE_EQ(eval_lambda_poly({1, 2, 0.5, 2, 0}), 0.5);
  EXPECT_DOUBLE_EQ(eval_lambda_poly({1, 1, 1, 2, 1}), 1.5);
  EXPECT_DOUBLE_EQ(eval_lambda_poly({1, 1, 0, 0, 0}), 0.5);
  EXPECT_DOUBLE_EQ(eval_lambda_poly({2, 1, 0, 0, 0}), 1.0);
}

TEST(BoundPoly, Examples) {
  const PolyBound b{1, 0.5, 4, 1, 1, 1};
  EXPECT_NEAR(eval_bound_poly(b, 1.0, point1(1.0)), std::exp(-2.0), 1e-15);
  EXPECT_THROW(eval_bound_poly(b, 0.0, point1(1.0)), DomainError);
}

TEST(BoundPoly, DecreasingInDistance) {
  const PolyBound b{2, 1.5, 4, 0.3, 2, 1};
  double prev = eval_bound_poly(b, 0.4, point1(0));
  for (double y = 0.5; y < 10; y += 0.5) {
    const double v = eval_bound_poly(b, 0.4, point1(y));
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(BoundPoly, TwoSidedIsGeometricMeanOfExponentials) {
  const PolyBound f{1, 0.5, 4, 1, 1, 1}, a{1, 0.5, 4, 1, 1, 1};
  const double v = eval_bound_poly_two_sided(f, a, 1.0, point1(1.0), point1(1.0));
  EXPECT_NEAR(v, eval_bound_poly(f, 1.0, point1(1.0)), 1e-15);
}

TEST(BoundExp, PreconditionOnCHat) {
  ExpBound b;
  b.d = 1;
  b.c_hat = 0.75;
  EXPECT_THROW(eval_bound_exp(b, 0.5, point1(0)), PreconditionError);
  b.c_hat = ExpBound::default_c_hat(1);
  const double v = eval_bound_exp(b, 0.5, point1(0));
  const double expected = 0.5 * std::exp(1.0 / 0.5 - 0.5 * 2 * (std::exp(0.5) - 1));
  EXPECT_NEAR(v / expected, 1.0, 1e-9);
}

TEST(Ledger, ConstantWeightsGiveCoefficientNorms) {
  const auto spec = constant_system(2, Mat::Zero(1, 1));
  LedgerInputs in{&spec, constant_weight(2), constant_weight(2), constant_weight(2), 5.0, {0.1, 0.2, 0.3, 0.4}, false};
  const auto L = estimate_ledger(in, SamplePlan::uniform(2, 0.1, 0.4, 3, 3.0, 10));
  EXPECT_DOUBLE_EQ(L(1), 1.0);
  for (int i : {2, 3, 4, 5, 6, 8}) EXPECT_EQ(L(i), 0.0) << i;
  EXPECT_NEAR(L(7), std::sqrt(2.0), 1e-15);
}

TEST(Ledger, DegenerateWindow) {
  const auto spec = constant_system(1, Mat::Zero(1, 1));
  LedgerInputs in{&spec, constant_weight(1), constant_weight(1), constant_weight(1), 4.0, {0.3, 0.3, 0.3, 0.3}, false};
  EXPECT_THROW(estimate_ledger(in, SamplePlan::uniform(1, 0.3, 0.3, 1, 1, 4)), DomainError);
}

TEST(Ledger, TimeDerivativeItemMatchesCalculus) {
  // sigma = rho = 1, w = exp(eps t s), nu1 = exp(eps1 t s): the c4 ratio is
  // eps s exp(-k t s), k = 2 (eps1 - eps) / S, maximised at s = 1 / (k t).
  const auto spec = constant_system(1, Mat::Zero(1, 1));
  const RadialProfile prof{Growth::polynomial, 1.0};
  const double eps = 0.1, eps1 = 0.2, S = 4.0, a0 = 0.5, b0 = 1.0;
  LedgerInputs in{&spec, profile_weight(prof, eps, 1), profile_weight(prof, eps1, 1), profile_weight(prof, eps1, 1), S,
                  {a0, 0.6, 0.8, b0}, false};
  const auto L = estimate_ledger(in, SamplePlan::uniform(1, a0, b0, 11, 30.0, 6000));
  const double k = 2 * (eps1 - eps) / S;
  const double exact = eps / (k * std::exp(1.0) * a0);
  EXPECT_NEAR(L(4) / exact, 1.0, 1e-4);
}

TEST(Ledger, ShrinkingWindowNeverIncreases) {
  const auto p = coupled_poly();
  const auto spec = to_operator(p);
  const RadialProfile prof{Growth::polynomial, 1.0};
  auto make = [&](double a0, double b0) {
    return LedgerInputs{&spec, profile_weight(prof, 0.1, 2), profile_weight(prof, 0.2, 2), profile_weight(prof, 0.4, 2),
                        4.0, {a0, (2 * a0 + b0) / 3, (a0 + 2 * b0) / 3, b0}, false};
  };
  const auto plan = SamplePlan::uniform(1, 0.1, 0.8, 15, 60.0, 600);
  const auto wide = estimate_ledger(make(0.1, 0.8), plan);
  const auto narrow = estimate_ledger(make(0.3, 0.6), plan);
  for (int i = 1; i <= 8; ++i) EXPECT_LE(narrow(i), wide(i)) << i;
}

TEST(Ledger, AnalyticEnvelopeDominatesNumeric) {
  const auto p = coupled_poly();
  const auto spec = to_operator(p);
  const RadialProfile prof{Growth::polynomial, 1.0};
  const Window w = Window::around(0.3);
  LedgerInputs in{&spec, profile_weight(prof, 0.125, 2), profile_weight(prof, 0.25, 2), profile_weight(prof, 0.5, 2),
                  4.0, w, false};
  const auto plan = SamplePlan::uniform(1, w.a0, w.b0, 9, 200.0, 2000);
  const auto numeric = estimate_ledger(in, plan);
  const auto analytic = analytic_ledger(p, in, plan, 2.0, 1.0);
  for (int i = 1; i <= 8; ++i) EXPECT_GE(analytic.ledger(i), numeric(i) * (1 - 1e-12)) << i;
}

TEST(Ledger, AdaptiveRadiusAvoidsSaturation) {
  const auto p = coupled_poly();
  const auto spec = to_operator(p);
  const RadialProfile prof{Growth::polynomial, 1.0};
  const Window w = Window::around(0.2);
  LedgerInputs in{&spec, profile_weight(prof, 0.125, 2), profile_weight(prof, 0.25, 2), profile_weight(prof, 0.5, 2),
                  4.0, w, false};
  const auto L = estimate_ledger_adaptive(in, 9, 8.0, 200);
  EXPECT_FALSE(L.saturated);
}
