#include <gtest/gtest.h>

#include <kernelbound/verify.hpp>
#include <stdexcept>

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

OperatorSpec chain3() {
  Mat v(3, 3);
  v << 1, 0, 0, -1, 1, 0, 0, -0.5, 1;
  return constant_system(1, v, "chain");
}

Mat asymmetric_v() {
  Mat v(2, 2);
  v << 2, 3, -1, 4;
  return v;
}

}  // namespace

TEST(CheckResult, StatusFollowsWorstViolation) {
  CheckResult r;
  r.tolerance = 0.1;
  r.observe(0.05, {});
  EXPECT_TRUE(r.finish().passed());
  r.observe(0.2, {0.5});
  EXPECT_FALSE(r.finish().passed());
  EXPECT_DOUBLE_EQ(r.where.t, 0.5);
  CheckResult empty;
  EXPECT_TRUE(empty.finish().passed());
  EXPECT_EQ(empty.worst, 0.0);
  CheckResult nan;
  nan.observe(std::nan(""), {});
  EXPECT_FALSE(nan.finish().passed());
}

TEST(Fingerprint, StableAndSensitive) {
  EXPECT_EQ(fingerprint(""), "cbf29ce484222325");
  EXPECT_EQ(fingerprint("a"), "af63dc4c8601ec8c");
  EXPECT_NE(fingerprint("grid 1"), fingerprint("grid 2"));
}

TEST(ParallelFor, CoversEveryIndexAndRethrows) {
  std::vector<int> hit(50, 0);
  parallel_for(hit.size(), 4, [&](std::size_t i) { hit[i] += 1; });
  for (int h : hit) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 7) throw std::runtime_error("boom");
                            }),
               std::runtime_error);
}

TEST(Domination, StrictForCoupledConstantSystem) {
  const auto spec = constant_system(1, asymmetric_v());
  const auto r = check_domination(spec, {{1, 4, 1.0 / 16}}, {0.1, 0.5}, {point1(0), point1(1)});
  EXPECT_TRUE(r.passed()) << r.worst << " at " << r.where.describe();
  // off-diagonal entry v21 < 0 is left unchanged, v12 > 0 is flipped: plain and P kernels differ
  const auto g = GridSpec{1, 4, 1.0 / 16};
  const auto a = kernel_column(assemble(spec, Variant::plain, g), g.node_of(point1(0)), 1, 0.5);
  const auto b = kernel_column(assemble(spec, Variant::P, g), g.node_of(point1(0)), 1, 0.5);
  const std::size_t n = g.node_of(point1(0));
  EXPECT_LT(a(0, n), 0.0);
  EXPECT_LT(std::abs(a(0, n)), b(0, n));
}

TEST(Domination, ScalarCaseIsPositivity) {
  const auto r = check_domination(to_operator(FamilyParams::uniform(Growth::polynomial, 1, 1, Mat::Ones(1, 1),
                                                                    Mat::Zero(1, 1), Vec::Ones(1), Vec::Ones(1),
                                                                    Mat::Ones(1, 1), Mat::Constant(1, 1, 2))),
                                  {{1, 4, 1.0 / 16}}, {0.3}, {point1(0.5)});
  EXPECT_TRUE(r.passed());
  EXPECT_LE(r.worst, 0.0);
}

TEST(MonotoneInR, HeatKernelIncrementsShrink) {
  std::vector<MonotoneTrend> trends;
  MonotoneOptions opt;
  opt.shrink = 4.0;
  const auto r = check_monotone_in_R(constant_system(1, Mat::Zero(1, 1)), 1.0 / 16, {2, 4, 8}, 1.0, {point1(0)},
                                     {point1(0), point1(1)}, opt, &trends);
  EXPECT_TRUE(r.passed()) << r.worst << " at " << r.where.describe();
  ASSERT_EQ(trends.size(), 2u);
  for (const auto& tr : trends) {
    EXPECT_GT(tr.increments[0], 1e-4);  // the R = 2 box absorbs a visible share of the mass
    EXPECT_GT(tr.increments[0], 100 * tr.increments[1]);
  }
}

TEST(MonotoneInR, SingleRadiusHasNothingToCompare) {
  const auto r = check_monotone_in_R(chain3(), 1.0 / 8, {4}, 0.5, {point1(0)}, {point1(0)});
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.samples, 0u);
}

TEST(MassAndPositivity, HeatAndCoupledFamily) {
  EXPECT_TRUE(check_mass_and_positivity(constant_system(1, Mat::Zero(1, 1)), {1, 6, 1.0 / 16}, {0.1, 1.0},
                                        {point1(0), point1(3)}, 0.0)
                  .passed());
  const auto p = coupled_poly();
  const double M = check_base(p).M;
  const auto r = check_mass_and_positivity(to_operator(p), {1, 6, 1.0 / 16}, {0.1, 0.5, 1.0}, {point1(0), point1(1)}, M);
  EXPECT_TRUE(r.passed()) << r.worst << " at " << r.where.describe();
}

TEST(MassAndPositivity, OverstatedDecayRateFails) {
  const auto r = check_mass_and_positivity(constant_system(1, Mat::Constant(1, 1, 1.0)), {1, 6, 1.0 / 16}, {1.0},
                                           {point1(0)}, 1.5);
  EXPECT_FALSE(r.passed());
}

TEST(Support, ChainSystemMatchesGraph) {
  const auto spec = chain3();
  for (int k = 0; k < 3; ++k) {
    const auto r = check_support(spec, {1, 4, 1.0 / 16}, k, 0.5, point1(0));
    EXPECT_TRUE(r.passed()) << "k=" << k << " " << r.worst << " at " << r.where.describe();
  }
  EXPECT_EQ(coupling_support(spec, 2).members, std::vector<int>{2});
  EXPECT_EQ(coupling_support(spec, 0).members, (std::vector<int>{0, 1, 2}));
}

TEST(Support, WrongPredictionIsCaught) {
  const auto spec = chain3();
  const auto wrong = coupling_support(3, 2, [](int, int) { return true; });
  EXPECT_FALSE(check_support(spec, {1, 4, 1.0 / 16}, 2, 0.5, point1(0), {}, &wrong).passed());
}

TEST(Duality, AsymmetricPotentialAndDrift) {
  const std::vector<std::pair<Vec, Vec>> pairs{{point1(0), point1(0.5)}, {point1(-1), point1(0.25)}};
  const auto r1 = check_duality(constant_system(1, asymmetric_v()), {1, 6, 1.0 / 32}, 0.5, pairs);
  EXPECT_TRUE(r1.passed()) << r1.worst;
  const auto r2 = check_duality(to_operator(coupled_poly()), {1, 6, 1.0 / 32}, 0.5, pairs);
  EXPECT_TRUE(r2.passed()) << r2.worst;
  // the transposed assembly makes the smoothed identity exact up to solver residuals
  EXPECT_LT(r2.worst, 1e-8);
}

TEST(Duality, PointwiseReadoutWithinDiscretization) {
  DualityOptions opt;
  opt.mollified_readout = false;
  const auto r = check_duality(constant_system(1, asymmetric_v()), {1, 6, 1.0 / 64}, 0.5,
                               {{point1(0), point1(0.5)}}, opt);
  EXPECT_TRUE(r.passed()) << r.worst;
}

TEST(ChapmanKolmogorov, AlignedStepsAndZeroSplit) {
  const auto spec = to_operator(coupled_poly());
  SemigroupOptions opt;
  opt.run.dt = 0.01;
  EXPECT_TRUE(check_chapman_kolmogorov(spec, Variant::P, {1, 4, 1.0 / 16}, 0.2, 0.3, opt).passed());
  EXPECT_TRUE(check_chapman_kolmogorov(spec, Variant::plain, {1, 4, 1.0 / 16}, 0.2, 0.0, opt).passed());
}

TEST(ChapmanKolmogorov, DefaultStepDividesBothTimes) {
  const auto spec = to_operator(coupled_poly());
  const auto r = check_chapman_kolmogorov(spec, Variant::P, {1, 4, 1.0 / 16}, 0.1, 0.5);
  EXPECT_TRUE(r.passed()) << r.worst;
  double dt = 0;
  for (const auto& [k, v] : r.parameters)
    if (k == "dt") dt = v;
  ASSERT_GT(dt, 0);
  EXPECT_NEAR(0.1 / dt, std::round(0.1 / dt), 1e-9);
  EXPECT_NEAR(0.5 / dt, std::round(0.5 / dt), 1e-9);
}

TEST(ChapmanKolmogorov, MisalignedStepsNeedTemporalTolerance) {
  const auto spec = to_operator(coupled_poly());
  SemigroupOptions opt;
  opt.run.dt = 0.03;
  opt.tol = 1e-12;
  const auto strict = check_chapman_kolmogorov(spec, Variant::P, {1, 4, 1.0 / 16}, 0.2, 0.1, opt);
  EXPECT_FALSE(strict.passed());
  opt.tol = 0.05;
  EXPECT_TRUE(check_chapman_kolmogorov(spec, Variant::P, {1, 4, 1.0 / 16}, 0.2, 0.1, opt).passed());
}

TEST(Integrability, WeightedRowIntegralMatchesGaussianMoment) {
  const GridSpec g{1, 10, 1.0 / 32};
  const auto op = assemble(constant_system(1, Mat::Zero(1, 1)), Variant::P_adjoint, g);
  const double eps = 0.2, w = 2.0 / 32;
  for (double x : {0.0, 2.0})
    for (double t : {0.1, 0.5}) {
      const auto col = kernel_column(op, g.node_of(point1(x)), 0, t, 0.5, t / 256);
      const double num = weighted_row_integral(col, [&](const Vec& y) { return eps * t * radial(y); });
      const double ref = oracle::gaussian_exp_moment(eps * t, x, 2 * t + w * w);
      EXPECT_NEAR(num / ref, 1.0, 2e-3) << "x=" << x << " t=" << t;
    }
}

TEST(Integrability, PolynomialExampleHoldsAndShiftedBoundFails) {
  const auto p = coupled_poly();
  const auto pl = make_bound_pipeline(p, 4.0, false);
  const GridSpec g{1, 8, 1.0 / 32};
  const auto r = check_lyapunov_integrability(pl.spec, pl.forward.w, g, {0.05, 0.1, 0.5}, {point1(0), point1(2)});
  EXPECT_TRUE(r.passed()) << r.worst << " " << r.note;
  IntegrabilityOptions opt;
  opt.G_shift = 1.0;
  EXPECT_FALSE(check_lyapunov_integrability(pl.spec, pl.forward.w, g, {0.5}, {point1(0)}, opt).passed());
}

TEST(Integrability, BoundaryDominatedIsInconclusive) {
  auto nu = TimeLyapunovSpec{};
  nu.base.profile = {Growth::polynomial, 1.0};
  nu.eps = 0.4;
  nu.sigma = 1;
  nu.delta = 0.75;
  nu.c0 = 100;
  const auto r = check_lyapunov_integrability(constant_system(1, Mat::Zero(1, 1)), nu, {1, 2, 1.0 / 16}, {1.0},
                                              {point1(0)});
  EXPECT_EQ(r.status, CheckStatus::inconclusive);
}

TEST(WeightedBound, CalibratedRatioIsStableAndPerturbationFails) {
  const auto pl = make_bound_pipeline(coupled_poly(), 4.0, true);
  WeightedBoundPlan plan;
  plan.taus = {0.2, 0.4};
  plan.sources = {point1(0), point1(1)};
  plan.holdout = {{1, 8, 1.0 / 64}, {1, 16, 1.0 / 32}};
  const auto rep = check_weighted_bound(pl, plan);
  EXPECT_TRUE(std::isfinite(rep.C_cal));
  EXPECT_TRUE(rep.one_sided.passed()) << rep.one_sided.worst;
  EXPECT_TRUE(rep.two_sided.passed()) << rep.two_sided.worst;
  for (const auto& c : rep.certificates) {
    EXPECT_GT(c.H(point1(0)), 0);
    EXPECT_GE(c.lambda, 0.5);
    // the implied bound dominates the measured kernel row at the calibration point
    EXPECT_GE(c.decay(0.2, point1(0), point1(3)), 0);
  }
  plan.holdout_ledger_divisor = 1e6;
  EXPECT_FALSE(check_weighted_bound(pl, plan).one_sided.passed());
}

TEST(DecayShape, PolynomialExample) {
  const auto pl = make_bound_pipeline(coupled_poly(), 4.0, false);
  const auto r = check_decay_shape(pl.spec, pl.forward.w, {1, 8, 1.0 / 32}, {0.25, 0.5}, {point1(0), point1(1)});
  EXPECT_TRUE(r.passed()) << r.worst << " at " << r.where.describe();
}

TEST(DecayShape, WeightGrowingFasterThanKernelFails) {
  TimeLyapunovSpec w;
  w.base.profile = {Growth::polynomial, 1.0};
  w.eps = 2.0;
  w.sigma = 0;
  const auto r = check_decay_shape(constant_system(1, Mat::Zero(1, 1)), w, {1, 8, 1.0 / 32}, {0.5}, {point1(0)});
  EXPECT_FALSE(r.passed());
}

TEST(Jobs, ParallelColumnsMatchSerial) {
  const auto op = assemble(to_operator(coupled_poly()), Variant::P, {1, 4, 1.0 / 16});
  std::vector<ColumnJob> jobs{{10, 0}, {40, 1}, {60, 0}};
  RunOptions serial, par;
  par.jobs = 3;
  const auto a = compute_columns(op, jobs, {0.1, 0.2}, serial);
  const auto b = compute_columns(op, jobs, {0.2, 0.1}, par);
  for (std::size_t j = 0; j < jobs.size(); ++j)
    for (std::size_t t = 0; t < 2; ++t) EXPECT_EQ(a[j][t].field.values, b[j][t].field.values);
}
