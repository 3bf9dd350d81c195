#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>

#include "ledger.hpp"
#include "lyapunov.hpp"
#include "quadrature.hpp"

namespace kernelbound {

// H(x) = A nu1(0, x) + B nu2(0, x); A and B carry the ledger brackets and the time integrals.
struct HFactors {
  double A = 0.0, B = 0.0;
  double operator()(double log_nu1_0, double log_nu2_0) const {
    const double out = A * std::exp(log_nu1_0) + B * std::exp(log_nu2_0);
    if (!std::isfinite(out)) throw DomainError("H is not finite");
    return out;
  }
};

inline HFactors eval_H_factors(const ConstantsLedger& L, const std::function<double(double)>& G1,
                               const std::function<double(double)>& G2) {
  const Window& w = L.window;
  w.validate();
  const double s = L.s;
  auto c = [&](int i) { return L(i); };
  const double p2 = s / 2.0, p4 = s / 4.0;
  const double first = std::pow(c(1), p2) + std::pow(c(1), p2) / std::pow(w.gap(), p2) + std::pow(c(2), s) +
                       std::pow(c(3), p2) + std::pow(c(4), p2) + std::pow(c(1), p4) * std::pow(c(2), p2) +
                       std::pow(c(1), p4) * std::pow(c(7), p2) + std::pow(c(7), s) + std::pow(c(8), p2);
  const double second = std::pow(c(1), p4) * std::pow(c(6), p2) + std::pow(c(2), p2) * std::pow(c(6), p2) +
                        std::pow(c(5), p2) + std::pow(c(6), s);
  const double i1 = integrate([&](double t) { return std::exp(G1(t)); }, w.a0, w.b0, 1e-9);
  const double i2 = integrate([&](double t) { return std::exp(G2(t)); }, w.a0, w.b0, 1e-9);
  HFactors f{first * i1, second * i2};
  if (!std::isfinite(f.A) || !std::isfinite(f.B)) throw DomainError("H is not finite");
  return f;
}

// Right-hand side of the weighted kernel estimate at a point x, assembled from the ledger,
// the primitives G1, G2 of the two time Lyapunov functions and log nu_i(0, x).
inline double eval_H(const ConstantsLedger& L, const std::function<double(double)>& G1,
                     const std::function<double(double)>& G2, double log_nu1_0 = 0.0, double log_nu2_0 = 0.0) {
  return eval_H_factors(L, G1, G2)(log_nu1_0, log_nu2_0);
}

inline double eval_H(const ConstantsLedger& L, const TimeLyapunovSpec& nu1, const TimeLyapunovSpec& nu2,
                     const Vec& x) {
  return eval_H(
      L, [&](double t) { return eval_G(nu1, t); }, [&](double t) { return eval_G(nu2, t); },
      nu1.log_nu(0.0, x).log, nu2.log_nu(0.0, x).log);
}

// Threshold X0 such that X^s <= alpha X^(s/2) + beta X^(s-1) + gamma X^(s-2) forces X <= X0.
inline double solve_X0(double alpha, double beta, double gamma, double s) {
  if (alpha < 0 || beta < 0 || gamma < 0) throw DomainError("coefficients must be non-negative");
  if (!(s > 2)) throw DomainError("exponent must exceed 2");
  return 4.0 / 3.0 * beta + std::sqrt(4.0 / 3.0 * gamma) + std::pow(4.0 / 3.0 * alpha * alpha, 1.0 / s);
}

struct LambdaInputs {
  double sigma = 1, rho = 1, alpha_bar = 0, gamma_max = 0, beta_bar = 0;
};

// Small-time exponent of the polynomial-family bound.
inline double eval_lambda_poly(const LambdaInputs& in) {
  if (!(in.sigma > 0 && in.rho > 0)) throw DomainError("sigma and rho must be positive");
  const double r = in.sigma / in.rho;
  double lam = std::max({0.5, r * in.alpha_bar, 0.5 * r * in.gamma_max, 0.5 * r * (2 * in.beta_bar + 1)});
  if (in.alpha_bar > 0.5) lam = std::max(lam, 0.5 * r * (in.alpha_bar + in.beta_bar));
  return lam;
}

struct PolyBound {
  double C = 1, lambda = 0.5, s = 4, eps = 1, sigma = 1, rho = 1;
};

// C t^(1 - lambda s) exp(-eps t^sigma (1+|y|^2)^rho)
inline double eval_bound_poly(const PolyBound& b, double t, const Vec& y) {
  if (!(t > 0)) throw DomainError("time must be positive");
  return b.C * std::pow(t, 1.0 - b.lambda * b.s) * std::exp(-b.eps * std::pow(t, b.sigma) * std::pow(radial(y), b.rho));
}

inline double eval_bound_poly_two_sided(const PolyBound& fwd, const PolyBound& adj, double t, const Vec& x,
                                        const Vec& y) {
  if (!(t > 0)) throw DomainError("time must be positive");
  const double pw = 1.0 - (fwd.lambda + adj.lambda) * fwd.s / 2.0;
  return fwd.C * std::pow(t, pw) * std::exp(-0.5 * fwd.eps * std::pow(t, fwd.sigma) * std::pow(radial(y), fwd.rho)) *
         std::exp(-0.5 * adj.eps * std::pow(t, adj.sigma) * std::pow(radial(x), adj.rho));
}

struct ExpBound {
  double C = 1, c_hat = 1, eps = 1, sigma = 1, rho = 1;
  int d = 1;
  static double default_c_hat(int d) { return (d + 3) / 4.0; }
};

namespace detail {
inline void check_c_hat(const ExpBound& b) {
  if (!(b.c_hat > (b.d + 2) / 4.0)) throw PreconditionError("c_hat must exceed (d + 2) / 4");
}
}  // namespace detail

// C t exp(c_hat t^-sigma - eps t^sigma psi(1+|y|^2))
inline double eval_bound_exp(const ExpBound& b, double t, const Vec& y) {
  detail::check_c_hat(b);
  if (!(t > 0)) throw DomainError("time must be positive");
  const RadialProfile prof{Growth::exponential, b.rho};
  const double e = b.c_hat * std::pow(t, -b.sigma) - b.eps * std::pow(t, b.sigma) * prof.psi(radial(y));
  return b.C * t * std::exp(e);
}

inline double eval_bound_exp_two_sided(const ExpBound& b, double t, const Vec& x, const Vec& y) {
  detail::check_c_hat(b);
  if (!(t > 0)) throw DomainError("time must be positive");
  const RadialProfile prof{Growth::exponential, b.rho};
  const double e = b.c_hat * std::pow(t, -b.sigma) -
                   0.5 * b.eps * std::pow(t, b.sigma) * (prof.psi(radial(y)) + prof.psi(radial(x)));
  return b.C * t * std::exp(e);
}

// Weight w and the two Lyapunov functions nu1, nu2 for one direction of the estimate, all sharing the
// synthesized exponents and differing only in scale (w < nu1 < nu2), each with its own calibrated c0.
struct WeightTriple {
  TimeLyapunovSpec w, nu1, nu2;
};

struct BoundPipeline {
  FamilyParams family;
  OperatorSpec spec;
  double s = 4.0;
  WeightTriple forward;
  std::optional<WeightTriple> adjoint;
};

inline WeightTriple make_weight_triple(const OperatorSpec& spec, const TimeLyapunovSpec& base,
                                       const VerifyGridSpec& grid) {
  WeightTriple out{base.rescaled(base.eps / 4.0), base.rescaled(base.eps / 2.0), base.rescaled(base.eps)};
  verify_certificate(spec, out.w, grid);
  verify_certificate(spec, out.nu1, grid);
  verify_certificate(spec, out.nu2, grid);
  return out;
}

inline BoundPipeline make_bound_pipeline(const FamilyParams& p, double s, bool two_sided,
                                         const SynthOverrides& ov = {}, const VerifyGridSpec& grid = {}) {
  if (!(s > p.dims.d + 2)) throw PreconditionError("exponent s must exceed d + 2");
  BoundPipeline out{p, to_operator(p), s, {}, std::nullopt};
  out.forward = make_weight_triple(out.spec, synth(p, Variant::P, ov), grid);
  if (two_sided) out.adjoint = make_weight_triple(out.spec, synth(p, Variant::P_adjoint, ov), grid);
  return out;
}

struct LedgerSampling {
  int times = 9;
  double radius = 8.0;
  int points = 200;
};

// Everything needed to evaluate the estimate on one time window.
struct BoundCertificate {
  ConstantsLedger ledger;
  std::optional<ConstantsLedger> ledger_star;
  WeightTriple forward;
  std::optional<WeightTriple> adjoint;
  HFactors factors, factors_star;
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double lambda_star = std::numeric_limits<double>::quiet_NaN();
  double C_cal = std::numeric_limits<double>::quiet_NaN();

  double H(const Vec& x) const { return factors(forward.nu1.log_nu(0, x).log, forward.nu2.log_nu(0, x).log); }
  double H_star(const Vec& y) const {
    if (!adjoint) throw PreconditionError("certificate has no adjoint part");
    return factors_star(adjoint->nu1.log_nu(0, y).log, adjoint->nu2.log_nu(0, y).log);
  }
  bool two_sided() const { return adjoint.has_value(); }

  // Pointwise bound on sum_k |p_hk(t, x, y)| implied by the calibrated estimate.
  double decay(double t, const Vec& x, const Vec& y) const {
    if (!std::isfinite(C_cal)) throw PreconditionError("certificate is not calibrated");
    return C_cal * H(x) * std::exp(-forward.w.log_nu(t, y).log);
  }
  double decay_two_sided(double t, const Vec& x, const Vec& y) const {
    if (!std::isfinite(C_cal)) throw PreconditionError("certificate is not calibrated");
    const double lw = forward.w.log_nu(t, y).log + adjoint.value().w.log_nu(t, x).log;
    return C_cal * std::sqrt(H(x) * H_star(y)) * std::exp(-0.5 * lw);
  }

  void refresh() {
    auto G = [](const TimeLyapunovSpec& nu) { return [&nu](double t) { return eval_G(nu, t); }; };
    factors = eval_H_factors(ledger, G(forward.nu1), G(forward.nu2));
    if (adjoint) factors_star = eval_H_factors(ledger_star.value(), G(adjoint->nu1), G(adjoint->nu2));
  }

  // Divides every ledger constant by f and re-evaluates H; used for deliberate perturbation runs.
  BoundCertificate with_ledger_divided(double f) const {
    BoundCertificate out = *this;
    for (auto& c : out.ledger.c) c /= f;
    if (out.ledger_star)
      for (auto& c : out.ledger_star->c) c /= f;
    out.refresh();
    return out;
  }
};

inline BoundCertificate make_certificate(const BoundPipeline& pl, const Window& window, const LedgerSampling& ls = {}) {
  BoundCertificate cert;
  cert.forward = pl.forward;
  cert.adjoint = pl.adjoint;
  auto ledger_for = [&](const WeightTriple& t, bool adjoint) {
    LedgerInputs in{&pl.spec, t.w.weight(), t.nu1.weight(), t.nu2.weight(), pl.s, window, adjoint};
    return estimate_ledger_adaptive(in, ls.times, ls.radius, ls.points);
  };
  cert.ledger = ledger_for(pl.forward, false);
  if (pl.adjoint) cert.ledger_star = ledger_for(*pl.adjoint, true);
  if (pl.family.growth == Growth::polynomial) {
    const FamilyParams& p = pl.family;
    auto lam = [&](const TimeLyapunovSpec& nu) {
      return eval_lambda_poly({nu.sigma, nu.base.profile.rho, p.alpha_bar(), p.gamma_max(), p.beta_bar()});
    };
    cert.lambda = lam(pl.forward.nu2);
    if (pl.adjoint) cert.lambda_star = lam(pl.adjoint->nu2);
  }
  cert.refresh();
  return cert;
}

}  // namespace kernelbound
