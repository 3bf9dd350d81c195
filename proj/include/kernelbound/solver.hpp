#pragma once

#include <Eigen/Eigenvalues>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <vector>

#include "coefficients.hpp"
#include "grid.hpp"

namespace kernelbound {

using SparseMat = Eigen::SparseMatrix<double>;

struct AssemblyOptions {
  std::size_t budget = 4'000'000;  // maximal number of unknowns
};

// Discrete operator on a grid. The adjoint variant is the transpose of the P matrix,
// so the discrete duality between the two is exact.
struct OperatorHandle {
  GridSpec grid;
  int m = 1;
  Variant variant = Variant::P;
  SparseMat A;
  std::size_t upwind_rows = 0;  // node/axis pairs where the drift fell back to one-sided differences
};

inline OperatorHandle assemble(const OperatorSpec& spec, Variant variant, const GridSpec& grid,
                               AssemblyOptions opt = {}) {
  grid.validate();
  if (grid.d != spec.dims.d) throw DimensionError("grid dimension does not match the operator");
  const int m = spec.dims.m, d = grid.d, n = grid.per_axis();
  const std::size_t N = grid.nodes();
  const std::size_t unknowns = N * static_cast<std::size_t>(m);
  if (unknowns > opt.budget) throw BudgetError(unknowns, opt.budget);

  const Variant base = variant == Variant::P_adjoint ? Variant::P : variant;
  const double h = grid.h, h2 = h * h;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(unknowns * (2 * d + 1 + m + (d == 2 ? 4 : 0)));
  std::size_t upwind = 0;

  auto node_at = [&](int i, int j) -> long {
    if (i < 0 || i >= n) return -1;
    if (d == 1) return i;
    if (j < 0 || j >= n) return -1;
    return static_cast<long>(i) + static_cast<long>(n) * j;
  };
  auto add = [&](std::size_t row_node, int c, long col_node, int k, double v) {
    if (col_node < 0 || v == 0.0) return;
    trip.emplace_back(static_cast<int>(row_node * m + c), static_cast<int>(col_node * m + k), v);
  };

  for (std::size_t node = 0; node < N; ++node) {
    const int i = static_cast<int>(d == 1 ? node : node % n);
    const int j = d == 1 ? 0 : static_cast<int>(node / n);
    const Vec x = grid.coord(node);
    const Mat v = spec.potential(x, base);
    for (int c = 0; c < m; ++c) {
      const Mat qc = spec.diffusion(c, x);
      if (d == 1 ? !(qc(0, 0) > 0) : !(Eigen::SelfAdjointEigenSolver<Mat>(qc, Eigen::EigenvaluesOnly).eigenvalues().minCoeff() > 0))
        throw AssemblyError("diffusion is not positive definite at node " + format_point(x) + " for equation " +
                            std::to_string(c + 1));
      const Vec bc = spec.drift(c, x);
      double diag = 0.0;
      for (int a = 0; a < d; ++a) {
        Vec e = Vec::Zero(d);
        e[a] = 0.5 * h;
        const double qp = spec.diffusion(c, x + e)(a, a);
        const double qm = spec.diffusion(c, x - e)(a, a);
        const long np = a == 0 ? node_at(i + 1, j) : node_at(i, j + 1);
        const long nm = a == 0 ? node_at(i - 1, j) : node_at(i, j - 1);
        add(node, c, np, c, qp / h2);
        add(node, c, nm, c, qm / h2);
        diag -= (qp + qm) / h2;
        const double ba = bc[a];
        if (std::abs(ba) * h / (2.0 * std::min(qp, qm)) <= 1.0) {
          add(node, c, np, c, ba / (2.0 * h));
          add(node, c, nm, c, -ba / (2.0 * h));
        } else {
          ++upwind;
          if (ba > 0) {
            add(node, c, np, c, ba / h);
            diag -= ba / h;
          } else {
            add(node, c, nm, c, -ba / h);
            diag += ba / h;
          }
        }
      }
      if (d == 2) {
        // D_1(q_12 D_2 u) + D_2(q_21 D_1 u) with centred differences
        const double s4 = 1.0 / (4.0 * h2);
        for (int di = -1; di <= 1; di += 2) {
          const double q12 = spec.diffusion(c, point2(x[0] + di * h, x[1]))(0, 1);
          add(node, c, node_at(i + di, j + 1), c, di * q12 * s4);
          add(node, c, node_at(i + di, j - 1), c, -di * q12 * s4);
        }
        for (int dj = -1; dj <= 1; dj += 2) {
          const double q21 = spec.diffusion(c, point2(x[0], x[1] + dj * h))(1, 0);
          add(node, c, node_at(i + 1, j + dj), c, dj * q21 * s4);
          add(node, c, node_at(i - 1, j + dj), c, -dj * q21 * s4);
        }
      }
      diag -= v(c, c);
      trip.emplace_back(static_cast<int>(node * m + c), static_cast<int>(node * m + c), diag);
      for (int k = 0; k < m; ++k)
        if (k != c) add(node, c, static_cast<long>(node), k, -v(c, k));
    }
  }
  OperatorHandle out;
  out.grid = grid;
  out.m = m;
  out.variant = variant;
  out.upwind_rows = upwind;
  out.A.resize(static_cast<int>(unknowns), static_cast<int>(unknowns));
  out.A.setFromTriplets(trip.begin(), trip.end());
  if (variant == Variant::P_adjoint) out.A = SparseMat(out.A.transpose());
  out.A.makeCompressed();
  return out;
}

enum class SolverKind { automatic, direct, iterative };

struct EvolveStats {
  std::size_t steps = 0;
  std::size_t partial_steps = 0;
  double max_residual = 0.0;
};

inline double default_dt(double t_final, double h) { return std::min(t_final / 64.0, h); }

// theta-method time stepping (theta = 1 implicit Euler, theta = 1/2 Crank-Nicolson).
class Propagator {
 public:
  Propagator(const OperatorHandle& op, double theta, SolverKind kind = SolverKind::automatic)
      : op_(&op), theta_(theta) {
    if (!(theta >= 0.5 && theta <= 1.0)) throw DomainError("theta must lie in [1/2, 1]");
    direct_ = kind == SolverKind::direct || (kind == SolverKind::automatic && op.grid.d == 1);
  }

  const OperatorHandle& op() const { return *op_; }
  const EvolveStats& stats() const { return stats_; }

  void step(Vec& u, double dt) {
    Stepper& s = stepper(dt);
    const Vec rhs = theta_ < 1.0 ? Vec(s.C * u) : u;
    Vec x;
    if (direct_) {
      x = s.lu->solve(rhs);
      double res = residual(s.B, x, rhs);
      if (res > 1e-10) {
        x += s.lu->solve(Vec(rhs - s.B * x));
        res = residual(s.B, x, rhs);
      }
      if (!(res <= 1e-10)) throw SolverError("direct solve did not reach the residual tolerance", 1, res);
      stats_.max_residual = std::max(stats_.max_residual, res);
    } else {
      x = s.it->solveWithGuess(rhs, u);
      if (s.it->info() != Eigen::Success)
        throw SolverError("iterative solve did not converge", s.it->iterations(), s.it->error());
      stats_.max_residual = std::max(stats_.max_residual, s.it->error());
    }
    u = std::move(x);
  }

  // Advances f to each requested time (sorted ascending), landing exactly on each one.
  std::vector<DiscreteField> evolve(const DiscreteField& f, const std::vector<double>& times, double dt) {
    if (!(dt > 0)) throw DomainError("time step must be positive");
    if (f.grid != op_->grid || f.m != op_->m) throw DimensionError("field does not live on the operator grid");
    std::vector<DiscreteField> out;
    Vec u = f.values;
    double t = f.time;
    for (double target : times) {
      if (target < t - 1e-14) throw DomainError("output times must be increasing and after the start time");
      while (target - t > 1e-12 * std::max(1.0, target)) {
        const double remaining = target - t;
        if (remaining >= dt * (1.0 - 1e-9)) {
          step(u, dt);
          t += dt;
          ++stats_.steps;
        } else {
          step(u, remaining);
          t = target;
          ++stats_.partial_steps;
        }
      }
      DiscreteField snap = f;
      snap.values = u;
      snap.time = target;
      out.push_back(std::move(snap));
    }
    return out;
  }

  DiscreteField evolve(const DiscreteField& f, double t_final, double dt) {
    return evolve(f, std::vector<double>{f.time + t_final}, dt).front();
  }

 private:
  struct Stepper {
    SparseMat B, C;
    std::unique_ptr<Eigen::SparseLU<SparseMat>> lu;
    std::unique_ptr<Eigen::BiCGSTAB<SparseMat, Eigen::IncompleteLUT<double>>> it;
  };

  static double residual(const SparseMat& B, const Vec& x, const Vec& rhs) {
    const double nr = rhs.norm();
    return nr > 0 ? (B * x - rhs).norm() / nr : (B * x).norm();
  }

  Stepper& stepper(double dt) {
    auto found = cache_.find(dt);
    if (found != cache_.end()) return *found->second;
    auto s = std::make_unique<Stepper>();
    SparseMat I(op_->A.rows(), op_->A.cols());
    I.setIdentity();
    s->B = I - (theta_ * dt) * op_->A;
    s->C = I + ((1.0 - theta_) * dt) * op_->A;
    if (direct_) {
      s->lu = std::make_unique<Eigen::SparseLU<SparseMat>>();
      s->lu->compute(s->B);
      if (s->lu->info() != Eigen::Success) throw SolverError("sparse LU factorization failed", 0, 0.0);
    } else {
      s->it = std::make_unique<Eigen::BiCGSTAB<SparseMat, Eigen::IncompleteLUT<double>>>();
      s->it->setTolerance(1e-12);
      s->it->setMaxIterations(5000);
      s->it->compute(s->B);
    }
    if (cache_.size() > 8) cache_.clear();
    return *cache_.emplace(dt, std::move(s)).first->second;
  }

  const OperatorHandle* op_;
  double theta_;
  bool direct_ = true;
  EvolveStats stats_;
  std::map<double, std::unique_ptr<Stepper>> cache_;
};

inline DiscreteField evolve(const OperatorHandle& op, const DiscreteField& f, double t_final, double dt, double theta,
                            EvolveStats* stats = nullptr) {
  Propagator prop(op, theta);
  DiscreteField out = prop.evolve(f, t_final, dt);
  if (stats) *stats = prop.stats();
  return out;
}

// Approximate kernel column: the solution started from a mollified delta in component k at a node.
// For the P variant, component h at node x approximates p_hk(t, x, y); for the adjoint variant it
// approximates p*_hk(t, x, y) = p_kh(t, y, x).
struct KernelField {
  DiscreteField field;
  Variant variant = Variant::P;
  std::size_t source_node = 0;
  int source_component = 0;
  double mollifier = 0.0;

  const GridSpec& grid() const { return field.grid; }
  double time() const { return field.time; }
  double operator()(int h, std::size_t node) const { return field(h, node); }
};

struct KernelRequest {
  std::size_t source_node = 0;
  int component = 0;
  std::vector<double> times;
  double theta = 1.0;
  double dt = 0.0;           // 0 picks the default rule
  double mollifier = 0.0;    // 0 picks two mesh widths
};

inline std::vector<KernelField> kernel_columns(Propagator& prop, const KernelRequest& req) {
  const OperatorHandle& op = prop.op();
  if (req.component < 0 || req.component >= op.m) throw DimensionError("source component out of range");
  if (req.source_node >= op.grid.nodes()) throw DomainError("source node outside the grid");
  if (req.times.empty()) return {};
  const double width = req.mollifier > 0 ? req.mollifier : 2.0 * op.grid.h;
  const double dt = req.dt > 0 ? req.dt : default_dt(*std::min_element(req.times.begin(), req.times.end()), op.grid.h);
  DiscreteField f(op.grid, op.m);
  const Vec delta = mollified_delta(op.grid, req.source_node, width);
  for (std::size_t i = 0; i < op.grid.nodes(); ++i) f(req.component, i) = delta[static_cast<Eigen::Index>(i)];
  std::vector<double> times = req.times;
  std::sort(times.begin(), times.end());
  auto snaps = prop.evolve(f, times, dt);
  std::vector<KernelField> out;
  for (auto& s : snaps) out.push_back({std::move(s), op.variant, req.source_node, req.component, width});
  return out;
}

inline KernelField kernel_column(const OperatorHandle& op, std::size_t source_node, int k, double t, double theta = 1.0,
                                 double dt = 0.0) {
  Propagator prop(op, theta);
  return kernel_columns(prop, {source_node, k, {t}, theta, dt, 0.0}).front();
}

// Per-component integrals of g(x) against the columns of a kernel field.
inline Vec integrate_against(const KernelField& kf, const std::function<double(const Vec&)>& g) {
  const GridSpec& grid = kf.grid();
  Vec out = Vec::Zero(kf.field.m);
  for (std::size_t i = 0; i < grid.nodes(); ++i) {
    const double gv = g(grid.coord(i));
    for (int h = 0; h < kf.field.m; ++h) out[h] += gv * kf(h, i);
  }
  return out * grid.cell_volume();
}

// Mollified point value: the field averaged against the same discrete Gaussian used for sources.
inline double mollified_sample(const DiscreteField& f, int c, std::size_t node, double width) {
  const Vec w = mollified_delta(f.grid, node, width);
  double out = 0.0;
  for (std::size_t i = 0; i < f.grid.nodes(); ++i) out += w[static_cast<Eigen::Index>(i)] * f(c, i);
  return out * f.grid.cell_volume();
}

// Applies a set of kernel columns (one per source node and component) to a grid function.
inline DiscreteField apply_kernel_to_function(const std::vector<KernelField>& columns, const DiscreteField& f) {
  DiscreteField out(f.grid, f.m);
  std::map<std::pair<std::size_t, int>, const KernelField*> index;
  for (const auto& kf : columns) {
    if (!(kf.grid() == f.grid)) throw DimensionError("kernel column lives on a different grid");
    index[{kf.source_node, kf.source_component}] = &kf;
  }
  const double vol = f.grid.cell_volume();
  for (std::size_t y = 0; y < f.grid.nodes(); ++y)
    for (int k = 0; k < f.m; ++k) {
      const double fy = f(k, y);
      if (fy == 0.0) continue;
      auto it = index.find({y, k});
      if (it == index.end()) throw PreconditionError("no kernel column for a node in the support of f");
      out.values += (fy * vol) * it->second->field.values;
      out.time = it->second->time();
    }
  return out;
}

}  // namespace kernelbound
