#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <string>

namespace kernelbound {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline std::string format_point(const Vec& x) {
  std::ostringstream os;
  os.precision(6);
  os << "(";
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << ")";
  return os.str();
}

inline bool all_finite(const Mat& a) { return a.allFinite(); }

// 1 + |x|^2, the radial variable every family is written in.
inline double radial(const Vec& x) { return 1.0 + x.squaredNorm(); }

inline Vec point1(double x) {
  Vec v(1);
  v << x;
  return v;
}

inline Vec point2(double x, double y) {
  Vec v(2);
  v << x, y;
  return v;
}

}  // namespace kernelbound
