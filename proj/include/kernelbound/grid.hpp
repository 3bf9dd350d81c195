#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "error.hpp"
#include "linalg.hpp"

namespace kernelbound {

// Uniform grid on [-R, R]^d with Dirichlet data on the boundary; only interior nodes are unknowns.
struct GridSpec {
  int d = 1;
  double R = 4.0;
  double h = 1.0 / 32.0;

  void validate() const {
    if (d != 1 && d != 2) throw DimensionError("grids are supported for d = 1 and d = 2");
    if (!(R > 0 && h > 0)) throw DomainError("grid needs R > 0 and h > 0");
    const double cells = 2.0 * R / h;
    const long n = std::lround(cells);
    if (std::abs(cells - static_cast<double>(n)) > 1e-9 * cells || n % 2 != 0 || n < 2)
      throw DomainError("2R/h must be an even integer");
  }

  int per_axis() const { return static_cast<int>(std::lround(2.0 * R / h)) - 1; }
  std::size_t nodes() const {
    const std::size_t n = static_cast<std::size_t>(per_axis());
    return d == 1 ? n : n * n;
  }

  double coord_1d(int i) const { return -R + (i + 1) * h; }

  Vec coord(std::size_t node) const {
    const int n = per_axis();
    if (d == 1) return point1(coord_1d(static_cast<int>(node)));
    return point2(coord_1d(static_cast<int>(node % n)), coord_1d(static_cast<int>(node / n)));
  }

  int axis_index(double x) const {
    const double r = (x + R) / h - 1.0;
    const long i = std::lround(r);
    if (std::abs(r - static_cast<double>(i)) > 1e-9 || i < 0 || i >= per_axis())
      throw DomainError("point is not an interior grid node");
    return static_cast<int>(i);
  }

  std::size_t node_of(const Vec& x) const {
    if (x.size() != d) throw DimensionError("point has wrong dimension");
    if (d == 1) return static_cast<std::size_t>(axis_index(x[0]));
    return static_cast<std::size_t>(axis_index(x[0])) + static_cast<std::size_t>(per_axis()) * axis_index(x[1]);
  }

  double cell_volume() const { return d == 1 ? h : h * h; }

  bool operator==(const GridSpec& o) const { return d == o.d && R == o.R && h == o.h; }
};

// Vector field on the interior nodes, stored node-major: value(c, node) = values[node * m + c].
struct DiscreteField {
  GridSpec grid;
  int m = 1;
  double time = 0.0;
  Vec values;

  DiscreteField() = default;
  DiscreteField(const GridSpec& g, int comps) : grid(g), m(comps), values(Vec::Zero(g.nodes() * comps)) {}

  double& operator()(int c, std::size_t node) { return values[static_cast<Eigen::Index>(node * m + c)]; }
  double operator()(int c, std::size_t node) const { return values[static_cast<Eigen::Index>(node * m + c)]; }

  std::vector<double> component(int c) const {
    std::vector<double> out(grid.nodes());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*this)(c, i);
    return out;
  }

  double sup_norm() const { return values.size() ? values.cwiseAbs().maxCoeff() : 0.0; }
};

// Discrete Gaussian of standard deviation `width` centred on a node, unit discrete mass.
inline Vec mollified_delta(const GridSpec& g, std::size_t center, double width) {
  const Vec y = g.coord(center);
  Vec out = Vec::Zero(static_cast<Eigen::Index>(g.nodes()));
  const double cut2 = std::pow(8.0 * width, 2);
  double mass = 0.0;
  for (std::size_t i = 0; i < g.nodes(); ++i) {
    const double r2 = (g.coord(i) - y).squaredNorm();
    if (r2 > cut2) continue;
    out[static_cast<Eigen::Index>(i)] = std::exp(-r2 / (2.0 * width * width));
    mass += out[static_cast<Eigen::Index>(i)];
  }
  return out / (mass * g.cell_volume());
}

}  // namespace kernelbound
