#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>

#include "error.hpp"

namespace kernelbound {

// Adaptive Gauss-Kronrod on [a, b] to the requested relative tolerance.
template <class F>
double integrate(F&& f, double a, double b, double rel_tol) {
  if (a == b) return 0.0;
  double err = 0.0;
  const double value =
      boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 20, rel_tol, &err);
  if (!std::isfinite(value)) throw DomainError("quadrature produced a non-finite value");
  return value;
}

}  // namespace kernelbound
