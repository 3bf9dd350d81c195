#pragma once

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "error.hpp"
#include "linalg.hpp"

namespace kernelbound {

struct SystemDims {
  int d = 1;
  int m = 1;
};

// Which member of the operator family is meant: the original system, the one whose
// potential has off-diagonal entries replaced by -|v_hk|, or the formal adjoint of the latter.
enum class Variant { plain, P, P_adjoint };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::plain: return "plain";
    case Variant::P: return "P";
    case Variant::P_adjoint: return "P_adjoint";
  }
  return "?";
}

inline Mat eval_VP(const Mat& v) {
  Mat out = -v.cwiseAbs();
  out.diagonal() = v.diagonal();
  return out;
}

// Coefficients of a weakly coupled elliptic system. Indices h are 0-based.
// dQ and divb are optional; when absent they are approximated by central differences.
struct OperatorSpec {
  SystemDims dims;
  std::function<Mat(int, const Vec&)> Q;
  std::function<Vec(int, const Vec&)> b;
  std::function<Mat(const Vec&)> V;
  std::function<Mat(int, const Vec&)> dQ;  // entry (i, j) = D_i q_ij
  std::function<double(int, const Vec&)> divb;
  std::function<bool(int, int)> coupled;  // v_hl not identically zero, decided from parameters
  std::string label;

  Mat diffusion(int h, const Vec& x) const {
    Mat q = Q(h, x);
    if (q.rows() != dims.d || q.cols() != dims.d) throw DimensionError("diffusion matrix has wrong shape");
    if (!q.allFinite()) throw NonFiniteError("Q", h, format_point(x));
    return q;
  }

  Vec drift(int h, const Vec& x) const {
    Vec v = b ? b(h, x) : Vec::Zero(dims.d);
    if (v.size() != dims.d) throw DimensionError("drift has wrong length");
    if (!v.allFinite()) throw NonFiniteError("b", h, format_point(x));
    return v;
  }

  Mat potential(const Vec& x) const {
    Mat v = V ? V(x) : Mat::Zero(dims.m, dims.m);
    if (v.rows() != dims.m || v.cols() != dims.m) throw DimensionError("potential has wrong shape");
    if (!v.allFinite()) throw NonFiniteError("V", -1, format_point(x));
    return v;
  }

  Mat potential(const Vec& x, Variant variant) const {
    Mat v = potential(x);
    return variant == Variant::plain ? v : eval_VP(v);
  }

  Mat diffusion_derivative(int h, const Vec& x) const {
    Mat r;
    if (dQ) {
      r = dQ(h, x);
    } else {
      r.resize(dims.d, dims.d);
      const double step = fd_step(x);
      for (int i = 0; i < dims.d; ++i) {
        Vec xp = x, xm = x;
        xp[i] += step;
        xm[i] -= step;
        r.row(i) = (diffusion(h, xp).row(i) - diffusion(h, xm).row(i)) / (2.0 * step);
      }
    }
    if (!r.allFinite()) throw NonFiniteError("DQ", h, format_point(x));
    return r;
  }

  // G_j = sum_i D_i q_ij, the first-order term produced by expanding div(Q grad u).
  Vec diffusion_divergence(int h, const Vec& x) const {
    return diffusion_derivative(h, x).colwise().sum().transpose();
  }

  double drift_divergence(int h, const Vec& x) const {
    double out = 0.0;
    if (divb) {
      out = divb(h, x);
    } else if (b) {
      const double step = fd_step(x);
      for (int i = 0; i < dims.d; ++i) {
        Vec xp = x, xm = x;
        xp[i] += step;
        xm[i] -= step;
        out += (drift(h, xp)[i] - drift(h, xm)[i]) / (2.0 * step);
      }
    }
    if (!std::isfinite(out)) throw NonFiniteError("div b", h, format_point(x));
    return out;
  }

 private:
  static double fd_step(const Vec& x) {
    return std::cbrt(std::numeric_limits<double>::epsilon()) * (1.0 + x.norm());
  }
};

// Constant coefficients: Q = I, b = 0 unless given, potential fixed.
inline OperatorSpec constant_system(int d, const Mat& v, std::string label = "constant") {
  OperatorSpec s;
  s.dims = {d, static_cast<int>(v.rows())};
  s.Q = [d](int, const Vec&) { return Mat::Identity(d, d); };
  s.b = [d](int, const Vec&) { return Vec::Zero(d); };
  s.V = [v](const Vec&) { return v; };
  s.dQ = [d](int, const Vec&) { return Mat::Zero(d, d); };
  s.divb = [](int, const Vec&) { return 0.0; };
  s.coupled = [v](int h, int l) { return v(h, l) != 0.0; };
  s.label = std::move(label);
  return s;
}

// Pointwise second-order jet of a vector field u: R^d -> R^m.
struct SmoothField {
  Vec value;                // m
  Mat gradient;             // m x d, row h is grad u_h
  std::vector<Mat> hessian; // m entries of d x d
};

inline Vec eval_operator(const OperatorSpec& spec, Variant variant, const SmoothField& u, const Vec& x) {
  const int m = spec.dims.m;
  if (u.value.size() != m || u.gradient.rows() != m || u.gradient.cols() != spec.dims.d ||
      static_cast<int>(u.hessian.size()) != m)
    throw DimensionError("field jet does not match the system dimensions");
  const Mat v = spec.potential(x, variant);
  Vec out(m);
  for (int h = 0; h < m; ++h) {
    const Mat q = spec.diffusion(h, x);
    const Vec g = spec.diffusion_divergence(h, x);
    const Vec bh = spec.drift(h, x);
    const Vec grad = u.gradient.row(h).transpose();
    double val = (q.cwiseProduct(u.hessian[h])).sum() + g.dot(grad);
    if (variant == Variant::P_adjoint) {
      val -= bh.dot(grad) + spec.drift_divergence(h, x) * u.value[h];
      val -= v.col(h).dot(u.value);
    } else {
      val += bh.dot(grad);
      val -= v.row(h).dot(u.value);
    }
    out[h] = val;
  }
  return out;
}

struct CouplingSupport {
  int k = 0;
  std::vector<std::vector<int>> levels;  // levels[i] is the i-th coupling layer
  std::vector<int> members;              // k together with every layer, sorted

  bool contains(int h) const { return std::binary_search(members.begin(), members.end(), h); }
};

// Breadth-first closure of equation k under "v_hl is not identically zero".
inline CouplingSupport coupling_support(int m, int k, const std::function<bool(int, int)>& nonzero) {
  if (k < 0 || k >= m) throw DimensionError("equation index out of range");
  CouplingSupport out;
  out.k = k;
  std::vector<char> seen(m, 0);
  seen[k] = 1;
  std::vector<int> frontier;
  for (int h = 0; h < m; ++h)
    if (h != k && nonzero(h, k)) {
      frontier.push_back(h);
      seen[h] = 1;
    }
  while (!frontier.empty()) {
    out.levels.push_back(frontier);
    std::vector<int> next;
    for (int h = 0; h < m; ++h) {
      if (seen[h]) continue;
      for (int l : frontier)
        if (nonzero(h, l)) {
          next.push_back(h);
          seen[h] = 1;
          break;
        }
    }
    frontier = std::move(next);
  }
  for (int h = 0; h < m; ++h)
    if (seen[h]) out.members.push_back(h);
  return out;
}

inline CouplingSupport coupling_support(const OperatorSpec& spec, int k) {
  if (!spec.coupled) throw PreconditionError("operator has no coupling predicate; pass one explicitly");
  return coupling_support(spec.dims.m, k, spec.coupled);
}

// Smallest eigenvalue of the comparison matrix (zeta_ii on the diagonal, -|zeta_ij| elsewhere).
inline double min_ellipticity(const Mat& zeta) {
  if (zeta.rows() != zeta.cols()) throw DimensionError("coefficient matrix is not square");
  if (!zeta.isApprox(zeta.transpose(), 1e-14) && (zeta - zeta.transpose()).cwiseAbs().maxCoeff() > 0)
    throw HypothesisViolation("coefficient matrix is not symmetric");
  const Mat z = eval_VP(zeta);
  Eigen::SelfAdjointEigenSolver<Mat> es(z, Eigen::EigenvaluesOnly);
  const double lam = es.eigenvalues().minCoeff();
  if (!(lam > 0.0))
    throw HypothesisViolation("comparison matrix is not positive definite (smallest eigenvalue " +
                              std::to_string(lam) + ")");
  return lam;
}

}  // namespace kernelbound
