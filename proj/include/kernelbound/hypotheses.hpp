#pragma once

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coefficients.hpp"
#include "family.hpp"

namespace kernelbound {

enum class Status { holds, fails, numeric_only };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::holds: return "holds";
    case Status::fails: return "fails";
    case Status::numeric_only: return "numeric-only";
  }
  return "?";
}

// One inequality "lhs > rhs" (strict) or "lhs >= rhs", stored as slack = lhs - rhs.
struct Margin {
  std::string group;
  std::string id;
  double slack = 0.0;
  bool strict = true;
  bool ok() const { return strict ? slack > 0.0 : slack >= 0.0; }
};

struct HypothesisReport {
  std::string id;
  Status status = Status::holds;
  std::vector<Margin> margins;
  std::optional<std::string> witness;
  double M = std::numeric_limits<double>::quiet_NaN();       // lower bound of the P row sums
  double M_star = std::numeric_limits<double>::quiet_NaN();  // same for the adjoint

  // A group holds when its own margins and the "common" ones are all satisfied.
  bool holds(std::string_view group) const {
    bool any = false;
    for (const auto& mg : margins) {
      if (mg.group != group && mg.group != "common") continue;
      any = true;
      if (!mg.ok()) return false;
    }
    return any;
  }

  const Margin* find(std::string_view margin_id) const {
    for (const auto& mg : margins)
      if (mg.id == margin_id) return &mg;
    return nullptr;
  }

  void add(std::string group, std::string margin_id, double slack, bool strict = true) {
    margins.push_back({std::move(group), std::move(margin_id), slack, strict});
  }

  void finalize() {
    status = Status::holds;
    for (const auto& mg : margins)
      if (!mg.ok()) {
        status = Status::fails;
        if (!witness) witness = mg.id;
      }
  }
};

namespace detail {

inline std::string idx(int a) { return "[" + std::to_string(a + 1) + "]"; }
inline std::string idx(int a, int b) { return "[" + std::to_string(a + 1) + "," + std::to_string(b + 1) + "]"; }
inline std::string idx(int a, int b, int c) {
  return "[" + std::to_string(a + 1) + "," + std::to_string(b + 1) + "," + std::to_string(c + 1) + "]";
}

// Sample points used for numeric infima: a half-line for d = 1, a polar net for d = 2.
inline std::vector<Vec> sample_points(int d, double radius, int n) {
  std::vector<Vec> pts;
  if (d == 1) {
    for (int i = 0; i <= n; ++i) pts.push_back(point1(radius * i / n));
    for (int i = 1; i <= n; ++i) pts.push_back(point1(-radius * i / n));
    return pts;
  }
  const int nr = std::max(8, n / 8);
  const int na = 32;
  pts.push_back(Vec::Zero(d));
  for (int i = 1; i <= nr; ++i)
    for (int a = 0; a < na; ++a) {
      Vec x = Vec::Zero(d);
      const double ang = 2.0 * M_PI * a / na;
      x[0] = radius * i / nr * std::cos(ang);
      x[1] = radius * i / nr * std::sin(ang);
      pts.push_back(x);
    }
  return pts;
}

inline double comparison_eigenvalue(const Mat& zeta) {
  Eigen::SelfAdjointEigenSolver<Mat> es(eval_VP(zeta), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// Infimum over sample points, refined with Brent along the first axis when d = 1.
template <class F>
double sampled_infimum(F&& f, int d, double radius, int n) {
  const auto pts = sample_points(d, radius, n);
  double best = std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double v = f(pts[i]);
    if (v < best) {
      best = v;
      arg = i;
    }
  }
  if (d == 1) {
    const double x0 = pts[arg][0];
    const double step = radius / n;
    auto g = [&](double x) { return f(point1(x)); };
    const auto r = boost::math::tools::brent_find_minima(g, x0 - step, x0 + step, 50);
    best = std::min(best, r.second);
  }
  return best;
}

}  // namespace detail

struct BaseCheckOptions {
  double radius = 20.0;
  int samples = 1000;
};

// Ellipticity plus lower bounds of the row sums of V^P (and of the adjoint column sums
// shifted by div b). Growth at infinity is decided from the exponents.
inline HypothesisReport check_base(const FamilyParams& p, BaseCheckOptions opt = {}) {
  p.validate();
  HypothesisReport rep;
  rep.id = std::string("base/") + to_string(p.growth);
  const int m = p.dims.m;
  for (int k = 0; k < m; ++k) rep.add("common", "ellipticity" + detail::idx(k), detail::comparison_eigenvalue(p.zeta[k]));

  bool row_ok = true, col_ok = true;
  for (int h = 0; h < m; ++h) {
    rep.add("base", "diag_positive" + detail::idx(h), p.theta(h, h));
    if (p.theta(h, h) <= 0) row_ok = col_ok = false;
    for (int k = 0; k < m; ++k) {
      if (k == h) continue;
      if (p.theta(h, k) != 0.0) {
        const double sl = p.gamma(h, h) - p.gamma(h, k);
        rep.add("base", "row_growth" + detail::idx(h, k), sl);
        if (sl <= 0) row_ok = false;
      }
      if (p.theta(k, h) != 0.0 && p.gamma(h, h) - p.gamma(k, h) <= 0) col_ok = false;
    }
    if (p.gamma(h, h) - p.beta_max(h) <= 0 && p.eta[h].maxCoeff() > 0) col_ok = false;
  }
  const OperatorSpec spec = to_operator(p);
  if (row_ok) {
    rep.M = detail::sampled_infimum(
        [&](const Vec& x) { return eval_VP(spec.potential(x)).rowwise().sum().minCoeff(); }, p.dims.d, opt.radius,
        opt.samples);
  }
  if (col_ok) {
    rep.M_star = detail::sampled_infimum(
        [&](const Vec& x) {
          const Vec cs = eval_VP(spec.potential(x)).colwise().sum().transpose();
          double mn = std::numeric_limits<double>::infinity();
          for (int h = 0; h < m; ++h) mn = std::min(mn, cs[h] + spec.drift_divergence(h, x));
          return mn;
        },
        p.dims.d, opt.radius, opt.samples);
  }
  rep.finalize();
  return rep;
}

// Generic coefficients: everything is sampled, so a clean result is only numeric evidence.
inline HypothesisReport check_base(const OperatorSpec& spec, BaseCheckOptions opt = {}) {
  HypothesisReport rep;
  rep.id = "base/" + spec.label;
  const int m = spec.dims.m, d = spec.dims.d;
  const auto pts = detail::sample_points(d, opt.radius, std::min(opt.samples, 400));
  for (int h = 0; h < m; ++h) {
    double lam = std::numeric_limits<double>::infinity();
    for (const auto& x : pts) {
      Eigen::SelfAdjointEigenSolver<Mat> es(spec.diffusion(h, x), Eigen::EigenvaluesOnly);
      lam = std::min(lam, es.eigenvalues().minCoeff());
    }
    rep.add("common", "ellipticity" + detail::idx(h), lam);
  }
  rep.M = detail::sampled_infimum(
      [&](const Vec& x) { return spec.potential(x, Variant::P).rowwise().sum().minCoeff(); }, d, opt.radius,
      opt.samples);
  rep.M_star = detail::sampled_infimum(
      [&](const Vec& x) {
        const Vec cs = spec.potential(x, Variant::P).colwise().sum().transpose();
        double mn = std::numeric_limits<double>::infinity();
        for (int h = 0; h < m; ++h) mn = std::min(mn, cs[h] + spec.drift_divergence(h, x));
        return mn;
      },
      d, opt.radius, opt.samples);
  rep.finalize();
  if (rep.status == Status::holds) rep.status = Status::numeric_only;
  return rep;
}

namespace detail {

inline void add_common(HypothesisReport& rep, const FamilyParams& p) {
  const int m = p.dims.m, d = p.dims.d;
  for (int k = 0; k < m; ++k) {
    rep.add("common", "theta_kk_positive" + idx(k), p.theta(k, k));
    for (int i = 0; i < d; ++i) rep.add("common", "eta_positive" + idx(k, i), p.eta[k][i]);
    rep.add("common", "alpha_nonnegative" + idx(k), p.alpha[k].minCoeff(), false);
    rep.add("common", "beta_nonnegative" + idx(k), p.beta[k].minCoeff(), false);
    rep.add("common", "alpha_symmetric" + idx(k), -(p.alpha[k] - p.alpha[k].transpose()).cwiseAbs().maxCoeff(), false);
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j)
        rep.add("common", "offdiag_alpha" + idx(k, i, j), p.alpha_min(k) - p.alpha[k](i, j));
    rep.add("common", "ellipticity" + idx(k), comparison_eigenvalue(p.zeta[k]));
  }
  rep.add("common", "gamma_nonnegative", p.gamma.minCoeff(), false);
}

inline double max_offdiag_col(const Mat& g, int k) {
  double v = -std::numeric_limits<double>::infinity();
  for (int h = 0; h < g.rows(); ++h)
    if (h != k) v = std::max(v, g(h, k));
  return v;
}
inline double max_offdiag_row(const Mat& g, int k) {
  double v = -std::numeric_limits<double>::infinity();
  for (int h = 0; h < g.cols(); ++h)
    if (h != k) v = std::max(v, g(k, h));
  return v;
}

}  // namespace detail

// Parameter inequalities for the polynomial family. Groups: "forward" (operator with V^P),
// "adjoint" (its formal adjoint) and "two_sided" (both at once).
inline HypothesisReport check_polynomial(const FamilyParams& p) {
  p.validate();
  if (p.growth != Growth::polynomial) throw PreconditionError("check_polynomial needs a polynomial family");
  HypothesisReport rep;
  rep.id = "polynomial";
  detail::add_common(rep, p);
  const int m = p.dims.m;
  for (int h = 0; h < m; ++h)
    for (int k = 0; k < m; ++k)
      if (h != k) rep.add("forward", "dominance" + detail::idx(h, k), p.gamma(h, h) - p.gamma(h, k));
  for (int k = 0; k < m; ++k) {
    const double gkk = p.gamma(k, k);
    const double am1 = p.alpha_max(k) - 1.0;
    rep.add("forward", "growth_balance" + detail::idx(k), std::max(gkk, p.beta_min(k)) - am1);
    const double adj = std::max({p.beta_max(k), detail::max_offdiag_col(p.gamma, k), am1});
    rep.add("adjoint", "adjoint_dominance" + detail::idx(k), gkk - adj);
    const double two = std::max(adj, detail::max_offdiag_row(p.gamma, k));
    rep.add("two_sided", "two_sided_dominance" + detail::idx(k), gkk - two);
  }
  rep.finalize();
  return rep;
}

inline HypothesisReport check_exponential(const FamilyParams& p) {
  p.validate();
  if (p.growth != Growth::exponential) throw PreconditionError("check_exponential needs an exponential family");
  HypothesisReport rep;
  rep.id = "exponential";
  detail::add_common(rep, p);
  const int m = p.dims.m;
  for (int h = 0; h < m; ++h)
    for (int k = 0; k < m; ++k)
      if (h != k) rep.add("forward", "dominance" + detail::idx(h, k), p.gamma(h, h) - p.gamma(h, k));
  for (int k = 0; k < m; ++k) {
    const double gkk = p.gamma(k, k);
    rep.add("forward", "growth_balance" + detail::idx(k), std::max(gkk, p.beta_min(k)) - p.alpha_max(k));
    const double adj = std::max({p.alpha_max(k), p.beta_max(k), detail::max_offdiag_col(p.gamma, k)});
    rep.add("adjoint", "adjoint_dominance" + detail::idx(k), gkk - adj);
    const double two = std::max(adj, detail::max_offdiag_row(p.gamma, k));
    rep.add("two_sided", "two_sided_dominance" + detail::idx(k), gkk - two);
  }
  rep.finalize();
  return rep;
}

inline HypothesisReport check_family(const FamilyParams& p) {
  return p.growth == Growth::polynomial ? check_polynomial(p) : check_exponential(p);
}

}  // namespace kernelbound
