#include <gtest/gtest.h>

#include <kernelbound/coefficients.hpp>
#include <kernelbound/family.hpp>
#include <random>

using namespace kernelbound;

namespace {

SmoothField jet1(double u, double du, double d2u) {
  SmoothField f;
  f.value = Vec::Constant(1, u);
  f.gradient = Mat::Constant(1, 1, du);
  f.hessian = {Mat::Constant(1, 1, d2u)};
  return f;
}

OperatorSpec scalar_spec(std::function<double(double)> q, std::function<double(double)> b, double v) {
  OperatorSpec s;
  s.dims = {1, 1};
  s.Q = [q](int, const Vec& x) { return Mat::Constant(1, 1, q(x[0])); };
  s.b = [b](int, const Vec& x) { return Vec::Constant(1, b(x[0])); };
  s.V = [v](const Vec&) { return Mat::Constant(1, 1, v); };
  return s;
}

FamilyParams poly_example(int m) {
  Mat theta = Mat::Constant(m, m, 0.5);
  theta.diagonal().setOnes();
  Mat gamma = Mat::Constant(m, m, 1.0);
  gamma.diagonal().setConstant(2.0);
  return FamilyParams::uniform(Growth::polynomial, 1, m, Mat::Ones(1, 1), Mat::Zero(1, 1), Vec::Ones(1),
                               Vec::Ones(1), theta, gamma);
}

}  // namespace

TEST(EvalOperator, LaplacianOfSquareIsTwo) {
  const auto s = constant_system(1, Mat::Zero(1, 1));
  for (double x : {-3.0, 0.0, 0.5, 7.0})
    EXPECT_DOUBLE_EQ(eval_operator(s, Variant::plain, jet1(x * x, 2 * x, 2), point1(x))[0], 2.0);
}

TEST(EvalOperator, PotentialVariantOnConstantField) {
  Mat v(2, 2);
  v << 2, 3, -1, 4;
  const auto s = constant_system(1, v);
  SmoothField f;
  f.value = Vec::Ones(2);
  f.gradient = Mat::Zero(2, 1);
  f.hessian = {Mat::Zero(1, 1), Mat::Zero(1, 1)};
  const Vec out = eval_operator(s, Variant::P, f, point1(0.3));
  EXPECT_DOUBLE_EQ(out[0], 1.0);
  EXPECT_DOUBLE_EQ(out[1], -3.0);
  const Vec plain = eval_operator(s, Variant::plain, f, point1(0.3));
  EXPECT_DOUBLE_EQ(plain[0], -5.0);
}

TEST(EvalOperator, VariableDiffusionUsesDivergenceTerm) {
  const auto s = scalar_spec([](double x) { return 1 + x * x; }, [](double) { return 0.0; }, 0.0);
  for (double x : {-2.0, -0.5, 0.0, 1.5})
    EXPECT_NEAR(eval_operator(s, Variant::plain, jet1(x, 1, 0), point1(x))[0], 2 * x, 1e-8);
}

TEST(EvalOperator, AdjointOfOrnsteinUhlenbeck) {
  const auto s = scalar_spec([](double) { return 1.0; }, [](double x) { return -x; }, 0.0);
  for (double x : {-1.0, 0.0, 2.0}) {
    const double val = eval_operator(s, Variant::P_adjoint, jet1(x * x, 2 * x, 2), point1(x))[0];
    EXPECT_NEAR(val, 2 + 3 * x * x, 1e-7);
  }
}

TEST(EvalOperator, NonFiniteCoefficientIsReported) {
  const auto s = scalar_spec([](double x) { return 1.0 / x; }, [](double) { return 0.0; }, 0.0);
  try {
    eval_operator(s, Variant::plain, jet1(0, 0, 0), point1(0.0));
    FAIL() << "expected an exception";
  } catch (const NonFiniteError& e) {
    EXPECT_EQ(e.item, "Q");
  }
}

TEST(EvalOperator, FluxDifferenceConvergesAtSecondOrder) {
  auto q = [](double x) { return 1 + x * x; };
  auto b = [](double x) { return -x; };
  const auto s = scalar_spec(q, b, 1.0);
  const double x = 0.7;
  const double exact = eval_operator(s, Variant::plain, jet1(std::sin(x), std::cos(x), -std::sin(x)), point1(x))[0];
  auto fd = [&](double h) {
    auto u = [](double z) { return std::sin(z); };
    const double diff = (q(x + h / 2) * (u(x + h) - u(x)) - q(x - h / 2) * (u(x) - u(x - h))) / (h * h);
    return diff + b(x) * (u(x + h) - u(x - h)) / (2 * h) - u(x);
  };
  const double e1 = std::abs(fd(0.1) - exact), e2 = std::abs(fd(0.05) - exact), e3 = std::abs(fd(0.025) - exact);
  EXPECT_GE(std::log2(e1 / e2), 1.9);
  EXPECT_GE(std::log2(e2 / e3), 1.9);
}

TEST(EvalVP, Examples) {
  Mat a(2, 2);
  a << 2, 3, -1, 4;
  Mat expect(2, 2);
  expect << 2, -3, -1, 4;
  EXPECT_EQ(eval_VP(a), expect);
  EXPECT_EQ(eval_VP(Mat::Identity(3, 3)), Mat::Identity(3, 3));
  Mat c(2, 2);
  c << 0, -5, -5, 0;
  EXPECT_EQ(eval_VP(c), c);
}

TEST(EvalVP, Idempotent) {
  std::mt19937 rng(3);
  std::normal_distribution<double> nd;
  for (int r = 0; r < 20; ++r) {
    Mat a = Mat::NullaryExpr(3, 3, [&]() { return nd(rng); });
    EXPECT_EQ(eval_VP(eval_VP(a)), eval_VP(a));
  }
}

TEST(CouplingSupport, Chain) {
  auto nz = [](int h, int l) { return (h == 1 && l == 0) || (h == 2 && l == 1); };
  const auto s1 = coupling_support(3, 0, nz);
  ASSERT_EQ(s1.levels.size(), 2u);
  EXPECT_EQ(s1.levels[0], std::vector<int>{1});
  EXPECT_EQ(s1.levels[1], std::vector<int>{2});
  EXPECT_EQ(s1.members, (std::vector<int>{0, 1, 2}));
  const auto s3 = coupling_support(3, 2, nz);
  EXPECT_TRUE(s3.levels.empty());
  EXPECT_EQ(s3.members, std::vector<int>{2});
}

TEST(CouplingSupport, FullyCoupledAndFromFamily) {
  const auto spec = to_operator(poly_example(2));
  EXPECT_EQ(coupling_support(spec, 0).members, (std::vector<int>{0, 1}));
  const auto none = constant_system(1, Mat::Identity(2, 2));
  EXPECT_EQ(coupling_support(none, 1).members, std::vector<int>{1});
}

TEST(CouplingSupport, MonotoneUnderAddingCouplings) {
  std::mt19937 rng(11);
  std::bernoulli_distribution coin(0.3);
  for (int rep = 0; rep < 50; ++rep) {
    const int m = 2 + rep % 4;
    std::vector<std::vector<char>> g(m, std::vector<char>(m, 0));
    for (auto& row : g)
      for (auto& e : row) e = coin(rng);
    auto before = [&](int k) { return coupling_support(m, k, [&](int h, int l) { return g[h][l] != 0; }).members; };
    std::vector<std::vector<int>> old;
    for (int k = 0; k < m; ++k) old.push_back(before(k));
    g[rep % m][(rep + 1) % m] = 1;
    for (int k = 0; k < m; ++k) {
      const auto now = before(k);
      EXPECT_TRUE(std::includes(now.begin(), now.end(), old[k].begin(), old[k].end()));
    }
  }
}

TEST(MinEllipticity, Examples) {
  Mat a(2, 2);
  a << 2, -1, -1, 2;
  EXPECT_NEAR(min_ellipticity(a), 1.0, 1e-14);
  EXPECT_NEAR(min_ellipticity(Mat::Identity(2, 2)), 1.0, 1e-14);
  Mat b(2, 2);
  b << 4, -1, -1, 1;
  EXPECT_NEAR(min_ellipticity(b), (5 - std::sqrt(13.0)) / 2, 1e-14);
  Mat c(2, 2);
  c << 1, 2, 2, 1;
  EXPECT_THROW(min_ellipticity(c), HypothesisViolation);
}

TEST(MinEllipticity, SignOfOffDiagonalDoesNotMatter) {
  Mat a(2, 2);
  a << 3, 1, 1, 2;
  Mat b = a;
  b(0, 1) = b(1, 0) = -1;
  EXPECT_DOUBLE_EQ(min_ellipticity(a), min_ellipticity(b));
}

TEST(Family, AnalyticDerivativesMatchDifferences) {
  for (Growth g : {Growth::polynomial, Growth::exponential}) {
    Mat zeta(2, 2), alpha(2, 2);
    zeta << 1.5, 0.3, 0.3, 1.0;
    alpha << 0.8, 0.2, 0.2, 0.6;
    Vec eta(2), beta(2);
    eta << 1.0, 2.0;
    beta << 0.5, 0.7;
    const auto p = FamilyParams::uniform(g, 2, 1, zeta, alpha, eta, beta, Mat::Ones(1, 1), Mat::Constant(1, 1, 2));
    const auto spec = to_operator(p);
    OperatorSpec numeric = spec;
    numeric.dQ = nullptr;
    numeric.divb = nullptr;
    const Vec x = point2(0.4, -0.7);
    EXPECT_LT((spec.diffusion_derivative(0, x) - numeric.diffusion_derivative(0, x)).norm(), 1e-6);
    EXPECT_NEAR(spec.drift_divergence(0, x), numeric.drift_divergence(0, x), 1e-6);
  }
}

TEST(Family, PolynomialValues) {
  const auto spec = to_operator(poly_example(2));
  const Vec x = point1(2.0);
  EXPECT_DOUBLE_EQ(spec.diffusion(0, x)(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(spec.drift(0, x)[0], -2.0 * 5.0);
  const Mat v = spec.potential(x);
  EXPECT_DOUBLE_EQ(v(0, 0), 25.0);
  EXPECT_DOUBLE_EQ(v(0, 1), 2.5);
}

TEST(Family, RejectsBadShapes) {
  auto p = poly_example(2);
  p.theta = Mat::Ones(3, 3);
  EXPECT_THROW(p.validate(), DimensionError);
}
