#include <gtest/gtest.h>

#include <filesystem>
#include <kernelbound/family.hpp>
#include <kernelbound/kernel_io.hpp>
#include <kernelbound/solver.hpp>
#include <random>

#include "oracles.hpp"

using namespace kernelbound;

namespace {

FamilyParams coupled_poly() {
  Mat theta(2, 2), gamma(2, 2);
  theta << 1, 0.5, 0.5, 1;
  gamma << 2, 1, 1, 2;
  return FamilyParams::uniform(Growth::polynomial, 1, 2, Mat::Ones(1, 1), Mat::Zero(1, 1), Vec::Ones(1), Vec::Ones(1),
                               theta, gamma);
}

OperatorSpec ornstein_uhlenbeck() {
  OperatorSpec s = constant_system(1, Mat::Zero(1, 1), "ou");
  s.b = [](int, const Vec& x) { return Vec(-x); };
  s.divb = [](int, const Vec&) { return -1.0; };
  return s;
}

DiscreteField constant_field(const GridSpec& g, const Vec& v) {
  DiscreteField f(g, static_cast<int>(v.size()));
  for (std::size_t i = 0; i < g.nodes(); ++i)
    for (int c = 0; c < v.size(); ++c) f(c, i) = v[c];
  return f;
}

DiscreteField random_field(const GridSpec& g, int m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  DiscreteField f(g, m);
  for (std::size_t i = 0; i < g.nodes(); ++i)
    if (g.coord(i).norm() < g.R / 2)
      for (int c = 0; c < m; ++c) f(c, i) = u(rng);
  return f;
}

}  // namespace

TEST(Grid, Validation) {
  EXPECT_NO_THROW((GridSpec{1, 4, 0.25}.validate()));
  EXPECT_THROW((GridSpec{1, 4, 8.0 / 7.0}.validate()), DomainError);
  EXPECT_THROW((GridSpec{1, 1, 2.0 / 3.0}.validate()), DomainError);  // 3 cells
  EXPECT_THROW((GridSpec{3, 4, 0.25}.validate()), DimensionError);
  const GridSpec g{2, 1, 0.25};
  EXPECT_EQ(g.per_axis(), 7);
  EXPECT_EQ(g.node_of(g.coord(17)), 17u);
  EXPECT_THROW(g.node_of(point2(0.1, 0)), DomainError);
}

TEST(Grid, MollifierHasUnitMass) {
  const GridSpec g{1, 4, 1.0 / 16};
  const Vec m = mollified_delta(g, g.node_of(point1(0.5)), 2 * g.h);
  EXPECT_NEAR(m.sum() * g.h, 1.0, 1e-14);
}

TEST(Assemble, BudgetAndEllipticity) {
  const auto s = constant_system(1, Mat::Zero(1, 1));
  EXPECT_THROW(assemble(s, Variant::P, {1, 4, 1.0 / 64}, {100}), BudgetError);
  OperatorSpec bad = s;
  bad.Q = [](int, const Vec& x) { return Mat::Constant(1, 1, x[0]); };
  EXPECT_THROW(assemble(bad, Variant::P, {1, 2, 0.25}), AssemblyError);
}

TEST(Assemble, DiffusionRowsSumToZeroInside) {
  OperatorSpec s = constant_system(1, Mat::Zero(1, 1));
  s.Q = [](int, const Vec& x) { return Mat::Constant(1, 1, 1 + x.squaredNorm()); };
  s.dQ = nullptr;
  const auto op = assemble(s, Variant::P, {1, 2, 0.125});
  const Vec rows = op.A * Vec::Ones(op.A.cols());
  for (Eigen::Index i = 1; i + 1 < rows.size(); ++i) EXPECT_NEAR(rows[i], 0.0, 1e-10);
}

TEST(Assemble, AdjointMatrixIsConsistentWithPointwiseAdjoint) {
  const auto s = ornstein_uhlenbeck();
  const GridSpec g{1, 4, 1.0 / 64};
  const auto op = assemble(s, Variant::P_adjoint, g);
  Vec u(static_cast<Eigen::Index>(g.nodes()));
  for (std::size_t i = 0; i < g.nodes(); ++i) u[i] = std::exp(-g.coord(i).squaredNorm());
  const Vec au = op.A * u;
  for (double x : {-1.0, 0.0, 0.5, 1.5}) {
    const std::size_t n = g.node_of(point1(x));
    SmoothField f;
    const double e = std::exp(-x * x);
    f.value = Vec::Constant(1, e);
    f.gradient = Mat::Constant(1, 1, -2 * x * e);
    f.hessian = {Mat::Constant(1, 1, (4 * x * x - 2) * e)};
    EXPECT_NEAR(au[n], eval_operator(s, Variant::P_adjoint, f, point1(x))[0], 2e-3);
  }
}

TEST(Evolve, ConstantPotentialDecay) {
  const double c = 1.3;
  const auto op = assemble(constant_system(1, Mat::Constant(1, 1, c)), Variant::P, {1, 16, 1.0 / 8});
  const auto out = evolve(op, constant_field(op.grid, Vec::Ones(1)), 0.5, 0.5 / 64, 0.5);
  EXPECT_NEAR(out(0, op.grid.node_of(point1(0))), std::exp(-c * 0.5), 1e-4);
}

TEST(Evolve, SystemAgainstMatrixExponential) {
  Eigen::Matrix2d v;
  v << 2, 3, -1, 4;
  const auto op = assemble(constant_system(1, v), Variant::plain, {1, 16, 1.0 / 8});
  Vec start(2);
  start << 1, -0.5;
  const double t = 0.5;
  const auto out = evolve(op, constant_field(op.grid, start), t, t / 128, 0.5);
  const Eigen::Vector2d expect = oracle::expm2(-t * v) * Eigen::Vector2d(1, -0.5);
  const std::size_t n = op.grid.node_of(point1(0));
  EXPECT_NEAR(out(0, n), expect[0], 1e-4);
  EXPECT_NEAR(out(1, n), expect[1], 1e-4);
}

TEST(Evolve, PartialFinalStepIsRecorded) {
  const auto op = assemble(constant_system(1, Mat::Constant(1, 1, 1.0)), Variant::P, {1, 4, 0.25});
  EvolveStats st;
  const auto out = evolve(op, constant_field(op.grid, Vec::Ones(1)), 0.3, 0.07, 1.0, &st);
  EXPECT_EQ(st.steps, 4u);
  EXPECT_EQ(st.partial_steps, 1u);
  EXPECT_DOUBLE_EQ(out.time, 0.3);
}

TEST(Evolve, DiscreteAdjointConsistency) {
  const auto spec = to_operator(coupled_poly());
  const GridSpec g{1, 4, 1.0 / 16};
  const auto fwd = assemble(spec, Variant::P, g);
  const auto adj = assemble(spec, Variant::P_adjoint, g);
  std::mt19937_64 rng(9);
  for (double theta : {1.0, 0.5}) {
    const auto f = random_field(g, 2, rng), h = random_field(g, 2, rng);
    const double lhs = evolve(fwd, f, 0.4, 0.01, theta).values.dot(h.values);
    const double rhs = f.values.dot(evolve(adj, h, 0.4, 0.01, theta).values);
    EXPECT_NEAR(lhs, rhs, 1e-8 * std::abs(lhs));
  }
}

TEST(Kernel, PositiveForPotentialVariant) {
  const auto spec = to_operator(coupled_poly());
  const auto op = assemble(spec, Variant::P, {1, 8, 1.0 / 16});
  const auto kf = kernel_column(op, op.grid.node_of(point1(0.5)), 0, 0.3);
  EXPECT_GE(kf.field.values.minCoeff(), -1e-12);
  EXPECT_GT(kf(1, op.grid.node_of(point1(0.5))), 0);
}

TEST(Kernel, HeatKernelMatchesOracle) {
  const auto op = assemble(constant_system(1, Mat::Zero(1, 1)), Variant::P, {1, 12, 1.0 / 64});
  const double t = 0.5, w = 2.0 / 64;
  const auto kf = kernel_column(op, op.grid.node_of(point1(0)), 0, t, 0.5, 1.0 / 256);
  double err = 0, norm = 0;
  for (std::size_t i = 0; i < op.grid.nodes(); ++i) {
    const double ex = oracle::heat(t, op.grid.coord(i)[0], 0, w * w);
    err += std::abs(kf(0, i) - ex);
    norm += ex;
  }
  EXPECT_LT(err / norm, 1e-3);
}

TEST(Kernel, OrnsteinUhlenbeckBothDirections) {
  const auto s = ornstein_uhlenbeck();
  const GridSpec g{1, 10, 1.0 / 32};
  const double t = 0.5, w = 2.0 / 32, y = 1.0;
  const auto fwd = kernel_column(assemble(s, Variant::P, g), g.node_of(point1(y)), 0, t, 0.5, 1.0 / 256);
  const auto adj = kernel_column(assemble(s, Variant::P_adjoint, g), g.node_of(point1(y)), 0, t, 0.5, 1.0 / 256);
  double ef = 0, ea = 0, nf = 0, na = 0;
  for (std::size_t i = 0; i < g.nodes(); ++i) {
    const double x = g.coord(i)[0];
    const double of = oracle::mehler_forward(t, x, y, w * w);  // p(t, x, y) as a function of x
    const double oa = oracle::mehler_adjoint(t, y, x, w * w);  // p(t, y, x) as a function of x
    ef += std::abs(fwd(0, i) - of);
    nf += of;
    ea += std::abs(adj(0, i) - oa);
    na += oa;
  }
  EXPECT_LT(ef / nf, 0.01);
  EXPECT_LT(ea / na, 0.01);
}

TEST(Kernel, TwoDimensionalHeatKernelWithIterativeSolver) {
  const auto op = assemble(constant_system(2, Mat::Zero(1, 1)), Variant::P, {2, 4, 1.0 / 8});
  const double t = 0.25, w = 2.0 / 8;
  const auto kf = kernel_column(op, op.grid.node_of(point2(0, 0)), 0, t, 0.5);
  double err = 0, norm = 0;
  for (std::size_t i = 0; i < op.grid.nodes(); ++i) {
    const Vec x = op.grid.coord(i);
    const double ex = oracle::heat(t, x[0], 0, w * w) * oracle::heat(t, x[1], 0, w * w);
    err += std::abs(kf(0, i) - ex);
    norm += ex;
  }
  EXPECT_LT(err / norm, 0.02);
}

TEST(Kernel, ApplyToFunctionReproducesEvolution) {
  const auto spec = to_operator(coupled_poly());
  const GridSpec g{1, 2, 0.125};
  const auto op = assemble(spec, Variant::P, g);
  Propagator prop(op, 1.0);
  std::vector<KernelField> cols;
  DiscreteField f(g, 2);
  for (double x : {-0.25, 0.0, 0.5}) {
    const std::size_t n = g.node_of(point1(x));
    f(0, n) = 1.0 + x;
    for (int k = 0; k < 2; ++k) {
      KernelRequest rq{n, k, {0.2}, 1.0, 0.01, 1e-3};
      cols.push_back(kernel_columns(prop, rq).front());
    }
  }
  const auto applied = apply_kernel_to_function(cols, f);
  const auto direct = evolve(op, f, 0.2, 0.01, 1.0);
  EXPECT_LT((applied.values - direct.values).cwiseAbs().maxCoeff(), 1e-10);
  DiscreteField missing(g, 2);
  missing(1, g.node_of(point1(1.0))) = 1;
  EXPECT_THROW(apply_kernel_to_function(cols, missing), PreconditionError);
}

TEST(KernelIo, BinaryRoundTrip) {
  const auto op = assemble(to_operator(coupled_poly()), Variant::P_adjoint, {1, 2, 0.125});
  const auto kf = kernel_column(op, op.grid.node_of(point1(0.25)), 1, 0.1);
  const auto path = (std::filesystem::temp_directory_path() / "kb_roundtrip.kbk").string();
  write_kernel_binary(kf, path);
  const auto back = read_kernel_binary(path);
  EXPECT_EQ(back.field.values, kf.field.values);
  EXPECT_EQ(back.source_node, kf.source_node);
  EXPECT_EQ(back.source_component, 1);
  EXPECT_EQ(back.variant, Variant::P_adjoint);
  EXPECT_DOUBLE_EQ(back.time(), 0.1);
  std::filesystem::remove(path);
}
