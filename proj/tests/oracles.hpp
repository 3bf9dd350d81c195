#pragma once
// Closed-form reference solutions used by the tests. Nothing here calls into the library
// except for the plain vector type.

#include <cmath>
#include <complex>

#include <kernelbound/linalg.hpp>

namespace oracle {

constexpr double pi = 3.14159265358979323846;

inline double gaussian(double z, double var) { return std::exp(-z * z / (2 * var)) / std::sqrt(2 * pi * var); }

// Heat kernel of u_t = u_xx started from a Gaussian of variance w2 centred at y.
inline double heat(double t, double x, double y, double w2 = 0.0) { return gaussian(x - y, 2 * t + w2); }

// Ornstein-Uhlenbeck generator u'' - x u'. Density of X_t given X_0 = x, evaluated at y,
// with the source (forward) or the target (adjoint) smeared by a Gaussian of variance w2.
inline double mehler_forward(double t, double x, double y, double w2 = 0.0) {
  const double v = 1 - std::exp(-2 * t);
  return gaussian(y - x * std::exp(-t), v + w2);
}
inline double mehler_adjoint(double t, double x, double y, double w2 = 0.0) {
  const double v = 1 - std::exp(-2 * t);
  return gaussian(y - x * std::exp(-t), v + w2 * std::exp(-2 * t));
}

// exp(A) for a real 2x2 matrix via the Cayley-Hamilton form.
inline Eigen::Matrix2d expm2(const Eigen::Matrix2d& a) {
  const double s = a.trace() / 2;
  const std::complex<double> q = std::sqrt(std::complex<double>(s * s - a.determinant()));
  const Eigen::Matrix2d shifted = a - s * Eigen::Matrix2d::Identity();
  std::complex<double> c = std::cosh(q);
  std::complex<double> k = std::abs(q) < 1e-12 ? std::complex<double>(1.0) : std::sinh(q) / q;
  return std::exp(s) * (c.real() * Eigen::Matrix2d::Identity() + k.real() * shifted);
}

// E[exp(a (1 + Y^2))] for Y ~ N(mu, v), valid while 2 a v < 1.
inline double gaussian_exp_moment(double a, double mu, double v) {
  return std::exp(a) / std::sqrt(1 - 2 * a * v) * std::exp(a * mu * mu / (1 - 2 * a * v));
}

}  // namespace oracle
