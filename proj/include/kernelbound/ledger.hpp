#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "coefficients.hpp"
#include "family.hpp"
#include "lyapunov.hpp"

namespace kernelbound {

// Time window a0 < a < b < b0 around the evaluation time.
struct Window {
  double a0 = 0, a = 0, b = 0, b0 = 0;

  void validate() const {
    if (!(a0 > 0 && a0 < a && a < b && b < b0)) throw DomainError("window needs 0 < a0 < a < b < b0");
  }
  double gap() const { return std::min(a - a0, b0 - b); }

  // Window whose middle interval (a, b) is centred on tau, with the proportions 1 : 2 : 4 : 6.
  static Window around(double tau) {
    if (!(tau > 0)) throw DomainError("evaluation time must be positive");
    return {tau / 3.0, 2.0 * tau / 3.0, 4.0 * tau / 3.0, 2.0 * tau};
  }
};

struct SamplePlan {
  std::vector<double> times;
  std::vector<Vec> points;

  // Times uniformly in [a0, b0] and points on the axes (and diagonals in d = 2) out to radius.
  static SamplePlan uniform(int d, double a0, double b0, int nt, double radius, int nx) {
    SamplePlan p;
    for (int i = 0; i < nt; ++i) p.times.push_back(a0 + (b0 - a0) * i / std::max(1, nt - 1));
    p.points = rays(d, radius, nx);
    return p;
  }

  static std::vector<Vec> rays(int d, double radius, int nx) {
    std::vector<Vec> pts;
    pts.push_back(Vec::Zero(d));
    std::vector<Vec> dirs;
    if (d == 1) {
      dirs = {point1(1), point1(-1)};
    } else {
      const double c = std::sqrt(0.5);
      dirs = {point2(1, 0), point2(-1, 0), point2(0, 1), point2(0, -1), point2(c, c), point2(-c, c)};
    }
    for (const auto& u : dirs)
      for (int i = 1; i <= nx; ++i) pts.push_back(u * (radius * i / nx));
    return pts;
  }
};

constexpr int kLedgerItems = 8;

struct ConstantsLedger {
  std::array<double, kLedgerItems> c{};  // c[0] = c1, ..., c[7] = c8
  double s = 4.0;
  Window window;
  bool adjoint = false;
  std::array<Vec, kLedgerItems> argmax_x;
  std::array<double, kLedgerItems> argmax_t{};
  bool saturated = false;  // some supremum sits on the outer edge of the sample plan

  double operator()(int i) const { return c.at(i - 1); }
};

struct LedgerInputs {
  const OperatorSpec* spec = nullptr;
  WeightFunction w, nu1, nu2;
  double s = 4.0;
  Window window;
  bool adjoint = false;
};

// Suprema of the eight ratios between coefficient-weighted derivatives of w and powers of nu1, nu2.
// Everything is compared in log form so that large exponential weights cancel before exponentiating.
inline ConstantsLedger estimate_ledger(const LedgerInputs& in, const SamplePlan& plan) {
  if (!in.spec) throw PreconditionError("ledger needs an operator");
  const OperatorSpec& spec = *in.spec;
  if (!(in.window.b0 > in.window.a0)) throw DomainError("degenerate window: a0 >= b0");
  const double s = in.s;
  if (!(s > spec.dims.d + 2)) throw PreconditionError("exponent s must exceed d + 2");
  std::vector<double> times;
  for (double t : plan.times)
    if (t >= in.window.a0 && t <= in.window.b0) times.push_back(t);
  if (times.empty()) throw DomainError("sample plan has no time inside the window");

  const int m = spec.dims.m;
  ConstantsLedger L;
  L.s = s;
  L.window = in.window;
  L.adjoint = in.adjoint;
  L.c.fill(0.0);
  double max_r = 0.0;
  for (const auto& x : plan.points) max_r = std::max(max_r, x.norm());

  static const char* names[kLedgerItems] = {"c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8"};
  auto record = [&](int i, double logv, double t, const Vec& x) {
    if (std::isnan(logv) || logv == std::numeric_limits<double>::infinity())
      throw LedgerError(names[i], "t=" + std::to_string(t) + " x=" + format_point(x));
    const double v = std::exp(logv);
    if (v > L.c[i]) {
      L.c[i] = v;
      L.argmax_x[i] = x;
      L.argmax_t[i] = t;
    }
  };
  auto lg = [](double v) { return v > 0 ? std::log(v) : -std::numeric_limits<double>::infinity(); };

  for (const auto& x : plan.points) {
    const Mat v = spec.potential(x, Variant::P);
    std::vector<double> pot(m), drift(m), qn(m), rn(m);
    std::vector<Mat> q(m);
    std::vector<Vec> g(m);
    for (int h = 0; h < m; ++h) {
      q[h] = spec.diffusion(h, x);
      g[h] = spec.diffusion_divergence(h, x);
      drift[h] = spec.drift(h, x).norm();
      qn[h] = q[h].norm();
      rn[h] = spec.diffusion_derivative(h, x).norm();
      pot[h] = in.adjoint ? v.row(h).norm() + std::abs(spec.drift_divergence(h, x)) : v.col(h).norm();
    }
    for (double t : times) {
      const WeightJet jw = in.w.jet(t, x);
      const WeightJet j1 = in.nu1.jet(t, x);
      const WeightJet j2 = in.nu2.jet(t, x);
      const double lw = jw.log, l1 = j1.log, l2 = j2.log;
      record(0, (2.0 / s) * (lw - l1), t, x);
      const double dtw = std::abs(jw.dt);
      record(3, lg(dtw) + (2.0 / s) * (lw - l1), t, x);
      for (int h = 0; h < m; ++h) {
        const Vec qg = q[h] * jw.grad;
        record(1, lg(qg.norm()) + (lw - l1) / s, t, x);
        const double divq = (q[h].cwiseProduct(jw.hess + jw.grad * jw.grad.transpose())).sum() + g[h].dot(jw.grad);
        record(2, lg(std::abs(divq)) + (2.0 / s) * (lw - l1), t, x);
        record(4, lg(pot[h]) + (2.0 / s) * (lw - l2), t, x);
        record(5, lg(drift[h]) + (lw - l2) / s, t, x);
        record(6, lg(qn[h]) + (lw - l1) / s, t, x);
        record(7, lg(rn[h]) + (2.0 / s) * (lw - l1), t, x);
      }
    }
  }
  for (int i = 0; i < kLedgerItems; ++i)
    if (L.c[i] > 0 && L.argmax_x[i].size() && L.argmax_x[i].norm() >= 0.95 * max_r && max_r > 0) L.saturated = true;
  return L;
}

// Like estimate_ledger, but doubles the sampling radius until no supremum sits on the edge.
inline ConstantsLedger estimate_ledger_adaptive(const LedgerInputs& in, int nt, double radius, int nx,
                                                int max_doublings = 6) {
  const int d = in.spec->dims.d;
  ConstantsLedger L;
  for (int i = 0; i <= max_doublings; ++i) {
    L = estimate_ledger(in, SamplePlan::uniform(d, in.window.a0, in.window.b0, nt, radius, nx));
    if (!L.saturated) return L;
    radius *= 2.0;
    nx *= 2;
  }
  return L;
}

// Closed-form envelopes c~ * f(a0, b0) for the radial families, with c~ taken as the
// supremum over the plan of ratio_i(t, x) / f_i(t).
struct AnalyticLedger {
  ConstantsLedger ledger;
  std::array<double, kLedgerItems> c_tilde{};
};

inline std::array<double, kLedgerItems> poly_time_exponents(const FamilyParams& p, double sigma, double rho) {
  const double ab = p.alpha_bar(), bb = p.beta_bar(), gm = p.gamma_max();
  auto pos = [](double v) { return std::max(0.0, v); };
  return {0.0,
          sigma * pos(2 * ab - 1) / (2 * rho),
          sigma / rho * pos(ab - 1),
          1.0,
          sigma / rho * gm,
          sigma * (2 * bb + 1) / (2 * rho),
          sigma / rho * ab,
          sigma * pos(2 * ab - 1) / (2 * rho)};
}

inline AnalyticLedger analytic_ledger(const FamilyParams& p, const LedgerInputs& in, const SamplePlan& plan,
                                      double sigma, double rho) {
  const Window& win = in.window;
  std::array<std::function<double(double)>, kLedgerItems> f;
  if (p.growth == Growth::polynomial) {
    const auto k = poly_time_exponents(p, sigma, rho);
    for (int i = 0; i < kLedgerItems; ++i) f[i] = [e = k[i]](double t) { return std::pow(t, -e); };
  } else {
    auto expo = [sigma](double t) { return std::exp(0.25 * std::pow(t, -sigma)); };
    f[0] = [](double) { return 1.0; };
    f[1] = f[2] = [expo, sigma](double t) { return std::pow(t, sigma) * expo(t); };
    f[3] = [](double t) { return 1.0 / t; };
    for (int i = 4; i < kLedgerItems; ++i) f[i] = expo;
  }
  AnalyticLedger out;
  out.c_tilde.fill(0.0);
  for (double t : plan.times) {
    if (t < win.a0 || t > win.b0) continue;
    SamplePlan single{{t}, plan.points};
    const ConstantsLedger at = estimate_ledger(in, single);
    for (int i = 0; i < kLedgerItems; ++i) out.c_tilde[i] = std::max(out.c_tilde[i], at.c[i] / f[i](t));
  }
  out.ledger = estimate_ledger(in, plan);
  out.ledger.c[0] = 1.0;
  for (int i = 1; i < kLedgerItems; ++i) {
    double env;
    if (p.growth == Growth::polynomial) {
      env = f[i](win.a0);
    } else if (i == 1 || i == 2) {
      env = std::pow(win.b0, sigma) * std::exp(0.25 * std::pow(win.a0, -sigma));
    } else {
      env = f[i](win.a0);
    }
    out.ledger.c[i] = out.c_tilde[i] * env;
  }
  return out;
}

}  // namespace kernelbound
