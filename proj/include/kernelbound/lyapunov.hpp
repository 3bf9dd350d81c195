#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "coefficients.hpp"
#include "family.hpp"
#include "hypotheses.hpp"
#include "quadrature.hpp"

namespace kernelbound {

// A positive number carried by its logarithm so that huge weights stay representable.
struct LogValue {
  double log = 0.0;
  double value() const {
    if (log > std::log(std::numeric_limits<double>::max())) throw SaturationError(log);
    return std::exp(log);
  }
};

// Radial profile psi(s), s = 1 + |x|^2:
//   polynomial:  psi(s) = s^rho
//   exponential: psi(s) = int_0^s exp(tau^rho / 2) dtau
struct RadialProfile {
  Growth form = Growth::polynomial;
  double rho = 1.0;

  double psi(double s) const {
    if (form == Growth::polynomial) return std::pow(s, rho);
    return std::exp(log_psi(s));
  }

  double log_psi(double s) const {
    if (form == Growth::polynomial) return rho * std::log(s);
    const double top = 0.5 * std::pow(s, rho);
    const double r = rho;
    const double scaled =
        integrate([top, r](double tau) { return std::exp(0.5 * std::pow(tau, r) - top); }, 0.0, s, 1e-10);
    return top + std::log(scaled);
  }

  double dpsi(double s) const {
    if (form == Growth::polynomial) return rho * std::pow(s, rho - 1.0);
    return std::exp(0.5 * std::pow(s, rho));
  }

  double d2psi(double s) const {
    if (form == Growth::polynomial) return rho * (rho - 1.0) * std::pow(s, rho - 2.0);
    return std::exp(0.5 * std::pow(s, rho)) * 0.5 * rho * std::pow(s, rho - 1.0);
  }
};

// Log-derivatives of a positive weight w(t, x) = exp(L(t, x)).
struct WeightJet {
  double log = 0.0;
  Vec grad;   // grad L
  Mat hess;   // D^2 L
  double dt = 0.0;  // D_t L
};

struct WeightFunction {
  std::function<WeightJet(double, const Vec&)> jet;
  std::string label;
};

// exp(eps t^sigma psi(1 + |x|^2)); sigma = 0 gives the stationary weight exp(eps psi).
inline WeightJet profile_jet(const RadialProfile& prof, double eps, double sigma, double t, const Vec& x) {
  const double s = radial(x);
  const double a = sigma == 0.0 ? eps : eps * std::pow(t, sigma);
  const double p = prof.psi(s);
  const double p1 = prof.dpsi(s);
  const double p2 = prof.d2psi(s);
  const int d = static_cast<int>(x.size());
  WeightJet j;
  j.log = a * p;
  j.grad = (2.0 * a * p1) * x;
  j.hess = (2.0 * a * p1) * Mat::Identity(d, d) + (4.0 * a * p2) * (x * x.transpose());
  j.dt = (sigma == 0.0 || t <= 0.0) ? 0.0 : eps * sigma * std::pow(t, sigma - 1.0) * p;
  return j;
}

inline WeightFunction profile_weight(const RadialProfile& prof, double eps, double sigma) {
  WeightFunction w;
  w.jet = [prof, eps, sigma](double t, const Vec& x) { return profile_jet(prof, eps, sigma, t, x); };
  w.label = "exp(" + std::to_string(eps) + " t^" + std::to_string(sigma) + " psi)";
  return w;
}

inline WeightFunction constant_weight(int d) {
  WeightFunction w;
  w.jet = [d](double, const Vec&) { return WeightJet{0.0, Vec::Zero(d), Mat::Zero(d, d), 0.0}; };
  w.label = "1";
  return w;
}

struct LyapunovSpec {
  RadialProfile profile;
  Variant target = Variant::P;
  double eps_hat = 1.0;
  double lambda = std::numeric_limits<double>::quiet_NaN();  // sup of (A phi)_k / phi once verified

  LogValue log_phi(const Vec& x) const { return {eps_hat * profile.psi(radial(x))}; }
};

// nu(t, x) = exp(eps t^sigma psi), eps = eps_hat T^-sigma unless rescaled.
// g(t) = c0 + eps delta t^p and G(t) = int_0^t g, p = sigma (delta - 1) / delta.
struct TimeLyapunovSpec {
  LyapunovSpec base;
  double T = 1.0;
  double sigma = 1.0;
  double delta = 0.5;
  double eps = 1.0;
  double c0 = std::numeric_limits<double>::quiet_NaN();

  double p() const { return sigma * (delta - 1.0) / delta; }
  bool calibrated() const { return std::isfinite(c0); }

  LogValue log_nu(double t, const Vec& x) const {
    if (t < 0) throw DomainError("time must be non-negative");
    if (t == 0.0) return {0.0};
    return {eps * std::pow(t, sigma) * base.profile.psi(radial(x))};
  }

  WeightFunction weight() const { return profile_weight(base.profile, eps, sigma); }

  // Same exponents with a smaller scale; the calibration has to be redone.
  TimeLyapunovSpec rescaled(double new_eps) const {
    TimeLyapunovSpec out = *this;
    out.eps = new_eps;
    out.c0 = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
};

inline double eval_g(const TimeLyapunovSpec& nu, double t) {
  if (!nu.calibrated()) throw PreconditionError("time Lyapunov function has no calibrated constant");
  if (t <= 0) throw DomainError("g is evaluated at positive times only");
  return nu.c0 + nu.eps * nu.delta * std::pow(t, nu.p());
}

inline double eval_G(const TimeLyapunovSpec& nu, double t) {
  if (!nu.calibrated()) throw PreconditionError("time Lyapunov function has no calibrated constant");
  if (t < 0) throw DomainError("G is evaluated at non-negative times only");
  const double q = nu.p() + 1.0;
  if (q <= 0) throw DomainError("g is not integrable at t = 0");
  return nu.c0 * t + nu.eps * nu.delta * std::pow(t, q) / q;
}

struct SynthOverrides {
  std::optional<double> rho, eps_hat, sigma, delta;
  double T = 1.0;
};

namespace detail {

inline double eps_cap_forward(const FamilyParams& p, int k, double rho) {
  const double z = p.zeta_max(k), th = p.theta(k, k), et = p.eta_min(k);
  const double pivot = 2.0 * p.beta_min(k) + 1.0 - p.alpha_max(k);
  const double g = p.gamma(k, k);
  if (g > pivot) return std::sqrt(th / (4.0 * rho * rho * z));
  if (g < pivot) return et / (2.0 * rho * z);
  return (et + std::sqrt(et * et + 4.0 * z * th)) / (4.0 * rho * z);
}

inline double eps_cap_adjoint(const FamilyParams& p, int k, double rho) {
  const double z = p.zeta_max(k), th = p.theta(k, k), et = p.eta_max(k);
  const double pivot = 2.0 * p.beta_max(k) - p.alpha_max(k) + 1.0;
  const double g = p.gamma(k, k);
  if (g > pivot) return std::sqrt(th / (4.0 * rho * rho * z));
  if (g < pivot) return th / (2.0 * rho * et);
  return (-et + std::sqrt(et * et + 4.0 * z * th)) / (4.0 * rho * z);
}

inline bool near(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); }

// Open-ended lower bound: take twice the bound (or 1 if the bound is zero).
inline double above(double lb) { return lb > 0 ? 2.0 * lb : 1.0; }

inline void finish_time_part(TimeLyapunovSpec& out, const SynthOverrides& ov, double sigma_lb, double delta_hi) {
  const double sigma = ov.sigma.value_or(above(sigma_lb));
  if (!(sigma > sigma_lb) || !(sigma > 0))
    throw SynthesisError("sigma", -1, "need sigma > " + std::to_string(sigma_lb));
  const double dlo = sigma / (sigma + 1.0);
  const double dhi = std::min(sigma, delta_hi * sigma);
  if (!(dhi > dlo)) throw SynthesisError("delta", -1, "empty interval");
  const double delta = ov.delta.value_or(0.5 * (dlo + dhi));
  if (!(delta > dlo && delta < dhi))
    throw SynthesisError("delta", -1, "need delta in (" + std::to_string(dlo) + ", " + std::to_string(dhi) + ")");
  out.sigma = sigma;
  out.delta = delta;
  out.T = ov.T;
  if (!(ov.T > 0)) throw SynthesisError("T", -1, "horizon must be positive");
  out.eps = out.base.eps_hat * std::pow(ov.T, -sigma);
}

}  // namespace detail

// Exponents and scale of the Lyapunov pair for the polynomial family.
// Every free parameter is the midpoint of its feasible interval unless overridden.
inline TimeLyapunovSpec synth_poly(const FamilyParams& p, Variant target, const SynthOverrides& ov = {}) {
  if (p.growth != Growth::polynomial) throw PreconditionError("synth_poly needs a polynomial family");
  const auto rep = check_polynomial(p);
  const bool adjoint = target == Variant::P_adjoint;
  if (!rep.holds(adjoint ? "adjoint" : "forward"))
    throw HypothesisViolation("parameter inequalities fail: " + rep.witness.value_or("?"));
  const int m = p.dims.m;
  TimeLyapunovSpec out;
  out.base.profile.form = Growth::polynomial;
  out.base.target = adjoint ? Variant::P_adjoint : Variant::P;

  double rho_hi = std::numeric_limits<double>::infinity();
  int binding = -1;
  for (int k = 0; k < m; ++k) {
    const double g = p.gamma(k, k), a = p.alpha_max(k);
    double u;
    if (!adjoint) {
      u = std::max((g + 1.0 - a) / 2.0, p.beta_min(k) + 1.0 - a);
      if (p.beta_min(k) <= 0) u = std::min(u, g);
    } else {
      u = std::min({(g + 1.0 - a) / 2.0, g - p.beta_max(k), g});
    }
    if (u < rho_hi) {
      rho_hi = u;
      binding = k;
    }
  }
  if (!(rho_hi > 0)) throw SynthesisError("rho", binding, "feasible interval is empty");
  const double rho = ov.rho.value_or(0.5 * rho_hi);
  if (!(rho > 0)) throw SynthesisError("rho", -1, "rho must be positive");

  double cap = 1.0;
  double gamma_ref = std::numeric_limits<double>::infinity();
  for (int k = 0; k < m; ++k) {
    const double g = p.gamma(k, k), a = p.alpha_max(k);
    if (!adjoint) {
      const double big = std::max(g, p.beta_min(k) + rho);
      if (big + 1.0 < 2.0 * rho + a && !detail::near(big + 1.0, 2.0 * rho + a))
        throw SynthesisError("rho growth balance", k, "rho = " + std::to_string(rho) + " too large");
      if (!(big > rho)) throw SynthesisError("rho below potential growth", k, "rho = " + std::to_string(rho));
      if (detail::near(big + 1.0, 2.0 * rho + a)) cap = std::min(cap, detail::eps_cap_forward(p, k, rho));
      gamma_ref = std::min(gamma_ref, big);
    } else {
      const double need = std::max(a + 2.0 * rho - 1.0, p.beta_max(k) + rho);
      if (g < need && !detail::near(g, need))
        throw SynthesisError("rho* growth balance", k, "rho* = " + std::to_string(rho) + " too large");
      if (!(g > rho)) throw SynthesisError("rho* below potential growth", k, "rho* = " + std::to_string(rho));
      if (detail::near(g, need)) cap = std::min(cap, detail::eps_cap_adjoint(p, k, rho));
      gamma_ref = std::min(gamma_ref, g);
    }
  }
  const double eps_hat = ov.eps_hat.value_or(0.5 * cap);
  if (!(eps_hat > 0 && (eps_hat < cap || (cap == 1.0 && eps_hat <= 1.0))))
    throw SynthesisError("eps_hat", -1, "need 0 < eps_hat < " + std::to_string(cap));
  out.base.profile.rho = rho;
  out.base.eps_hat = eps_hat;
  detail::finish_time_part(out, ov, rho / (gamma_ref - rho), 1.0 - rho / gamma_ref);
  return out;
}

inline TimeLyapunovSpec synth_exp(const FamilyParams& p, Variant target, const SynthOverrides& ov = {}) {
  if (p.growth != Growth::exponential) throw PreconditionError("synth_exp needs an exponential family");
  const auto rep = check_exponential(p);
  const bool adjoint = target == Variant::P_adjoint;
  if (!rep.holds(adjoint ? "adjoint" : "forward"))
    throw HypothesisViolation("parameter inequalities fail: " + rep.witness.value_or("?"));
  const int m = p.dims.m;
  TimeLyapunovSpec out;
  out.base.profile.form = Growth::exponential;
  out.base.target = adjoint ? Variant::P_adjoint : Variant::P;
  double hi = std::numeric_limits<double>::infinity();
  int binding = -1;
  for (int k = 0; k < m; ++k) {
    const double u = adjoint ? p.gamma(k, k) : std::max(p.beta_min(k), p.gamma(k, k));
    if (u < hi) {
      hi = u;
      binding = k;
    }
  }
  if (!(hi > 0)) throw SynthesisError(adjoint ? "rho*" : "rho", binding, "feasible interval is empty");
  const double rho = ov.rho.value_or(0.5 * hi);
  if (!(rho > 0 && rho < hi))
    throw SynthesisError(adjoint ? "rho*" : "rho", binding, "need 0 < rho < " + std::to_string(hi));
  const double eps_hat = ov.eps_hat.value_or(0.5);
  if (!(eps_hat > 0)) throw SynthesisError("eps_hat", -1, "must be positive");
  out.base.profile = {Growth::exponential, rho};
  out.base.eps_hat = eps_hat;
  if (adjoint) {
    detail::finish_time_part(out, ov, rho / (p.gamma_min() - rho), 1.0);
  } else {
    SynthOverrides o = ov;
    if (!o.sigma) o.sigma = 1.0;
    detail::finish_time_part(out, o, 0.0, 1.0);
  }
  return out;
}

inline TimeLyapunovSpec synth(const FamilyParams& p, Variant target, const SynthOverrides& ov = {}) {
  return p.growth == Growth::polynomial ? synth_poly(p, target, ov) : synth_exp(p, target, ov);
}

// Jet of u = (w, ..., w) divided by w, fed to the pointwise operator.
inline SmoothField normalized_field(const WeightJet& j, int m) {
  SmoothField f;
  f.value = Vec::Ones(m);
  f.gradient = j.grad.transpose().replicate(m, 1);
  const Mat h = j.hess + j.grad * j.grad.transpose();
  f.hessian.assign(m, h);
  return f;
}

struct CertificateCheck {
  double sup_R = 0.0;
  double sup_2R = 0.0;
  double change = 0.0;
  Vec argmax;
  bool pass = false;
};

struct VerifyGridSpec {
  double R = 20.0;
  int points = 400;  // per unit R along one axis
  double tol = 0.01;
};

namespace detail {

inline std::vector<Vec> verification_points(int d, double R, int n) {
  std::vector<Vec> pts;
  if (d == 1) {
    for (int i = -n; i <= n; ++i) pts.push_back(point1(R * i / n));
  } else {
    const int nn = std::max(8, n / 8);
    for (int i = -nn; i <= nn; ++i)
      for (int j = -nn; j <= nn; ++j) pts.push_back(point2(R * i / nn, R * j / nn));
  }
  return pts;
}

inline double checked_max(double cur, double v, const Vec& x) {
  if (std::isnan(v)) throw NonFiniteError("Lyapunov ratio", -1, format_point(x));
  return std::max(cur, v);
}

}  // namespace detail

// sup_x max_k (A phi)_k / phi on |x|_inf <= R and <= 2R. Passes when the two agree.
inline CertificateCheck verify_certificate(const OperatorSpec& spec, LyapunovSpec& phi, VerifyGridSpec grid = {}) {
  const int m = spec.dims.m;
  const auto pts = detail::verification_points(spec.dims.d, 2.0 * grid.R, 2 * grid.points);
  CertificateCheck out;
  out.sup_R = out.sup_2R = -std::numeric_limits<double>::infinity();
  for (const auto& x : pts) {
    const auto j = profile_jet(phi.profile, phi.eps_hat, 0.0, 0.0, x);
    const Vec r = eval_operator(spec, phi.target, normalized_field(j, m), x);
    const double v = r.maxCoeff();
    if (std::isnan(v)) throw NonFiniteError("Lyapunov ratio", -1, format_point(x));
    if (v > out.sup_2R) out.argmax = x;
    out.sup_2R = std::max(out.sup_2R, v);
    if (x.lpNorm<Eigen::Infinity>() <= grid.R * (1 + 1e-12)) out.sup_R = std::max(out.sup_R, v);
  }
  if (!std::isfinite(out.sup_2R)) throw CertificateFailure("Lyapunov ratio is not bounded above on the grid");
  out.change = std::abs(out.sup_2R - out.sup_R) / std::max(1.0, std::abs(out.sup_R));
  if (out.change >= 0.1)
    throw CertificateFailure("Lyapunov ratio grows under grid extension (relative change " +
                             std::to_string(out.change) + ")");
  out.pass = out.change < grid.tol;
  phi.lambda = std::max(0.0, out.sup_2R);
  return out;
}

struct TimeCertificateCheck {
  double c0 = 0.0;
  double worst_residual = 0.0;  // verification-grid sup of the residual, compare with c0
  double worst_t = 0.0;
  Vec worst_x;
  bool pass = false;
};

// Calibrates c0 in D_t nu + (A nu)_k <= g nu on the coarse (t, x) grid and checks
// the result on a finer and wider one.
inline TimeCertificateCheck verify_certificate(const OperatorSpec& spec, TimeLyapunovSpec& nu,
                                               VerifyGridSpec grid = {}) {
  const int m = spec.dims.m;
  const double T = nu.T;
  auto residual = [&](double t, const Vec& x) {
    const auto j = profile_jet(nu.base.profile, nu.eps, nu.sigma, t, x);
    const Vec r = eval_operator(spec, nu.base.target, normalized_field(j, m), x);
    return j.dt + r.maxCoeff() - nu.eps * nu.delta * std::pow(t, nu.p());
  };
  std::vector<double> coarse_t, fine_t;
  for (int j = 0; j <= 10; ++j) coarse_t.push_back(T * std::pow(2.0, -j));
  fine_t = coarse_t;
  for (int j = 0; j < 10; ++j) fine_t.push_back(0.75 * T * std::pow(2.0, -j));
  const auto inner = detail::verification_points(spec.dims.d, grid.R, grid.points);
  const auto outer = detail::verification_points(spec.dims.d, 2.0 * grid.R, 2 * grid.points + 1);
  double sup = -std::numeric_limits<double>::infinity();
  for (double t : coarse_t)
    for (const auto& x : inner) sup = detail::checked_max(sup, residual(t, x), x);
  TimeCertificateCheck out;
  out.c0 = std::max(0.0, sup);
  out.worst_residual = -std::numeric_limits<double>::infinity();
  for (double t : fine_t)
    for (const auto& x : outer) {
      const double r = residual(t, x);
      if (std::isnan(r)) throw NonFiniteError("time Lyapunov residual", -1, format_point(x));
      if (r > out.worst_residual) {
        out.worst_residual = r;
        out.worst_t = t;
        out.worst_x = x;
      }
    }
  out.pass = std::isfinite(out.worst_residual) && out.worst_residual <= out.c0 + grid.tol * std::max(1.0, out.c0);
  nu.c0 = out.c0;
  return out;
}

}  // namespace kernelbound
