#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "coefficients.hpp"

namespace kernelbound {

enum class Growth { polynomial, exponential };

inline const char* to_string(Growth g) { return g == Growth::polynomial ? "polynomial" : "exponential"; }

// Parameters of the two radial families. With s = 1 + |x|^2 and G(s, a) = s^a (polynomial)
// or exp(s^a) (exponential):
//   q^k_ij = zeta^k_ij G(s, alpha^k_ij)
//   b^k_i  = -eta^k_i x_i G(s, beta^k_i)
//   v_hk   = theta_hk G(s, gamma_hk)
struct FamilyParams {
  Growth growth = Growth::polynomial;
  SystemDims dims;
  std::vector<Mat> zeta, alpha;
  std::vector<Vec> eta, beta;
  Mat theta, gamma;

  void validate() const {
    const int d = dims.d, m = dims.m;
    if (d < 1 || m < 1) throw DimensionError("family needs d >= 1 and m >= 1");
    auto bad = [&](const std::string& what) { throw DimensionError("family parameter " + what + " has wrong shape"); };
    if (static_cast<int>(zeta.size()) != m || static_cast<int>(alpha.size()) != m) bad("zeta/alpha");
    if (static_cast<int>(eta.size()) != m || static_cast<int>(beta.size()) != m) bad("eta/beta");
    for (int k = 0; k < m; ++k) {
      if (zeta[k].rows() != d || zeta[k].cols() != d) bad("zeta");
      if (alpha[k].rows() != d || alpha[k].cols() != d) bad("alpha");
      if (eta[k].size() != d) bad("eta");
      if (beta[k].size() != d) bad("beta");
      if ((zeta[k] - zeta[k].transpose()).cwiseAbs().maxCoeff() > 0)
        throw HypothesisViolation("zeta is not symmetric", k);
    }
    if (theta.rows() != m || theta.cols() != m) bad("theta");
    if (gamma.rows() != m || gamma.cols() != m) bad("gamma");
  }

  double alpha_min(int k) const { return alpha[k].diagonal().minCoeff(); }
  double alpha_max(int k) const { return alpha[k].diagonal().maxCoeff(); }
  double zeta_max(int k) const { return zeta[k].diagonal().maxCoeff(); }
  double beta_min(int k) const { return beta[k].minCoeff(); }
  double beta_max(int k) const { return beta[k].maxCoeff(); }
  double eta_min(int k) const { return eta[k].minCoeff(); }
  double eta_max(int k) const { return eta[k].maxCoeff(); }

  double alpha_bar() const {
    double a = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < dims.m; ++k) a = std::max(a, alpha_max(k));
    return a;
  }
  double beta_bar() const {
    double a = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < dims.m; ++k) a = std::max(a, beta_max(k));
    return a;
  }
  double gamma_max() const { return gamma.diagonal().maxCoeff(); }
  double gamma_min() const { return gamma.diagonal().minCoeff(); }

  // Fill every equation with the same per-equation data.
  static FamilyParams uniform(Growth g, int d, int m, const Mat& zeta, const Mat& alpha, const Vec& eta,
                              const Vec& beta, const Mat& theta, const Mat& gamma) {
    FamilyParams p;
    p.growth = g;
    p.dims = {d, m};
    p.zeta.assign(m, zeta);
    p.alpha.assign(m, alpha);
    p.eta.assign(m, eta);
    p.beta.assign(m, beta);
    p.theta = theta;
    p.gamma = gamma;
    return p;
  }
};

namespace detail {

struct GrowthFn {
  Growth g;
  double operator()(double s, double a) const { return g == Growth::polynomial ? std::pow(s, a) : std::exp(std::pow(s, a)); }
  // d/ds of G(s, a)
  double ds(double s, double a) const {
    if (a == 0.0) return 0.0;
    return g == Growth::polynomial ? a * std::pow(s, a - 1.0)
                                   : std::exp(std::pow(s, a)) * a * std::pow(s, a - 1.0);
  }
};

}  // namespace detail

inline OperatorSpec to_operator(const FamilyParams& p) {
  p.validate();
  const detail::GrowthFn G{p.growth};
  const int d = p.dims.d;
  OperatorSpec s;
  s.dims = p.dims;
  s.label = std::string(to_string(p.growth)) + " family";
  s.Q = [p, G, d](int h, const Vec& x) {
    const double r = radial(x);
    Mat q(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) q(i, j) = p.zeta[h](i, j) * G(r, p.alpha[h](i, j));
    return q;
  };
  s.dQ = [p, G, d](int h, const Vec& x) {
    const double r = radial(x);
    Mat out(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) out(i, j) = p.zeta[h](i, j) * G.ds(r, p.alpha[h](i, j)) * 2.0 * x[i];
    return out;
  };
  s.b = [p, G, d](int h, const Vec& x) {
    const double r = radial(x);
    Vec out(d);
    for (int i = 0; i < d; ++i) out[i] = -p.eta[h][i] * x[i] * G(r, p.beta[h][i]);
    return out;
  };
  s.divb = [p, G, d](int h, const Vec& x) {
    const double r = radial(x);
    double out = 0.0;
    for (int i = 0; i < d; ++i)
      out -= p.eta[h][i] * (G(r, p.beta[h][i]) + 2.0 * x[i] * x[i] * G.ds(r, p.beta[h][i]));
    return out;
  };
  s.V = [p, G](const Vec& x) {
    const double r = radial(x);
    const int m = p.dims.m;
    Mat v(m, m);
    for (int h = 0; h < m; ++h)
      for (int k = 0; k < m; ++k) v(h, k) = p.theta(h, k) == 0.0 ? 0.0 : p.theta(h, k) * G(r, p.gamma(h, k));
    return v;
  };
  s.coupled = [theta = p.theta](int h, int l) { return theta(h, l) != 0.0; };
  return s;
}

}  // namespace kernelbound
