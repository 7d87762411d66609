#pragma once

// Solver for the variational inequality on a fixed constraint set
//
//   find u in K:  <T(a,u), v-u> + phi(v) - phi(u) >= <m, v-u>   for all v in K,
//   K = {v : |g_c(v)| <= r_c for every cell c},
//
// posed as the convex program  min_u  sum_c a_c/p |g_c(u)|^p h^d + sum_i phi(u_i) h^d - <m,u>
// over K. The program is split as g = Du (cell vectors carrying the power term and the
// ball indicator) and, when phi is not identically zero, s = u (nodes carrying phi), and
// solved by ADMM with residual balancing. The u-update is one sparse SPD solve with a
// matrix that does not depend on the penalty, so it is factorized once per call.

#include <qvident/constraint.hpp>
#include <qvident/grid.hpp>
#include <qvident/operator.hpp>
#include <qvident/problem.hpp>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

namespace qvident {

struct InnerOptions {
  int max_iter = 20000;
  double tol_kkt = 1e-9;
  /// Initial ADMM penalty, relative to the mean of a.
  double penalty = 1.0;
  double over_relaxation = 1.0;

  void check() const {
    if (max_iter < 1) throw InvalidConfig("inner max_iter must be >= 1");
    if (!(tol_kkt > 0.0)) throw InvalidConfig("inner tol_kkt must be > 0");
    if (!(penalty > 0.0)) throw InvalidConfig("inner penalty must be > 0");
    if (!(over_relaxation >= 1.0 && over_relaxation < 2.0)) {
      throw InvalidConfig("over_relaxation must lie in [1, 2)");
    }
  }
};

struct KktReport {
  int iterations = 0;
  double primal_residual = 0.0;
  double stationarity_residual = 0.0;
  double feasibility_violation = 0.0;
  bool converged = false;

  double worst() const { return std::max({primal_residual, stationarity_residual, feasibility_violation}); }
};

/// Multipliers of the split program: flux lambda_c in the subdifferential of the
/// cell term at g_c, and xi_i in the subdifferential of phi.
struct Multipliers {
  VectorField flux;
  NodeField phi_subgradient;
};

/// Full ADMM iterate, reusable as a warm start across calls with nearby radii.
struct InnerState {
  NodeField u;
  VectorField g;
  VectorField y;  // flux / rho
  NodeField s;
  NodeField w;  // phi_subgradient / (sigma rho)
  double rho;
};

struct ViResult {
  NodeField u;
  KktReport report;
  VectorField split;
  Multipliers multipliers;
  InnerState state;
};

namespace detail {

inline double weighted_norm(std::span<const double> x, double weight) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s * weight);
}

/// argmin_{t >= 0} (a/p) t^p + (rho/2)(t - v)^2 for v >= 0, i.e. the root of
/// a t^{p-1} + rho t = rho v on [0, v].
inline double power_prox_radius(double v, double a, double rho, double p) {
  if (v <= 0.0) return 0.0;
  if (p == 2.0) return rho * v / (a + rho);
  double lo = 0.0;
  double hi = v;
  double t = rho * v / (a + rho);
  for (int it = 0; it < 200; ++it) {
    const double f = a * std::pow(t, p - 1.0) + rho * (t - v);
    if (f > 0.0) hi = t; else lo = t;
    if (f == 0.0 || hi - lo <= 1e-16 * v) break;
    const double df = a * (p - 1.0) * std::pow(t, p - 2.0) + rho;
    double next = t - f / df;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (next == t) break;
    t = next;
  }
  return t;
}

/// Prox of the cell term a/p|.|^p plus the indicator of the r-ball, step 1/rho.
inline void cell_prox(std::span<const double> in, std::span<double> out, double a, double rho, double p, double r) {
  double mag = 0.0;
  for (double x : in) mag += x * x;
  mag = std::sqrt(mag);
  if (mag == 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  const double t = std::min(power_prox_radius(mag, a, rho, p), r);
  for (std::size_t k = 0; k < in.size(); ++k) out[k] = in[k] * (t / mag);
}

inline void flux_of(std::span<const double> gc, std::span<double> out, double a, double p) {
  double mag = 0.0;
  for (double x : gc) mag += x * x;
  mag = std::sqrt(mag);
  const double f = a * flux_factor(mag, p);
  for (std::size_t k = 0; k < gc.size(); ++k) out[k] = f * gc[k];
}

inline Eigen::SparseMatrix<double> gradient_matrix(const Grid& g) {
  const auto d = static_cast<std::size_t>(g.dim());
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t c = 0; c < g.cell_count(); ++c) {
    for (const auto& e : g.stencil(c)) {
      for (std::size_t k = 0; k < d; ++k) {
        trips.emplace_back(static_cast<int>(c * d + k), static_cast<int>(e.node), e.coeff[k]);
      }
    }
  }
  Eigen::SparseMatrix<double> D(static_cast<int>(g.cell_count() * d), static_cast<int>(g.interior_node_count()));
  D.setFromTriplets(trips.begin(), trips.end());
  return D;
}

}  // namespace detail

/// Recomputes every residual of the split optimality system from (u, g, multipliers):
///   primal        ||Du - g||
///   stationarity  ||D^T lambda + xi - m|| combined with the natural-map residuals of
///                 lambda_c in d(a/p|.|^p + ball)(g_c) and xi in dphi(u)
///   feasibility   max(0, max_c |g_c(u)| - r_c)
/// All norms are discrete L2 with the h^dim weight.
inline KktReport kkt_residual(const QviProblem& prob, const CellField& a, const RadiusField& r, const NodeField& u,
                              const VectorField& g_split, const Multipliers& mult, double tol = 0.0) {
  const Grid& grid = prob.grid;
  require_grid(grid, u.grid());
  require_grid(grid, g_split.grid());
  require_grid(grid, mult.flux.grid());
  require_grid(grid, mult.phi_subgradient.grid());
  const double vol = grid.cell_volume();
  const auto d = static_cast<std::size_t>(grid.dim());

  KktReport rep;
  const VectorField du = gradient(grid, u);
  rep.primal_residual = detail::weighted_norm((du - g_split).values(), vol);

  double viol = 0.0;
  for (std::size_t c = 0; c < grid.cell_count(); ++c) viol = std::max(viol, du.magnitude(c) - r[c]);
  rep.feasibility_violation = viol;

  const NodeField dt = gradient_transpose(grid, mult.flux);
  double node_res = 0.0;
  double phi_res = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double ri = dt[i] + mult.phi_subgradient[i] - prob.m[i];
    node_res += ri * ri;
    const double ni = u[i] - prob.phi.prox(u[i] + mult.phi_subgradient[i], 1.0);
    phi_res += ni * ni;
  }

  double cell_res = 0.0;
  std::vector<double> grad(d), shifted(d);
  for (std::size_t c = 0; c < grid.cell_count(); ++c) {
    const auto gc = g_split.at(c);
    const auto lc = mult.flux.at(c);
    detail::flux_of(gc, grad, a[c], prob.p);
    double mag = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      shifted[k] = gc[k] + (lc[k] - grad[k]);
      mag += shifted[k] * shifted[k];
    }
    mag = std::sqrt(mag);
    const double scale = mag > r[c] ? r[c] / mag : 1.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double e = gc[k] - scale * shifted[k];
      cell_res += e * e;
    }
  }
  rep.stationarity_residual = std::sqrt((node_res + phi_res + cell_res) * vol);
  rep.converged = rep.primal_residual <= tol && rep.stationarity_residual <= tol && rep.feasibility_violation <= tol;
  return rep;
}

namespace detail {

class AdmmSolver {
public:
  AdmmSolver(const QviProblem& prob, const CellField& a, const RadiusField& r, const InnerOptions& opts)
      : prob_(prob), a_(a), r_(r), opts_(opts), grid_(prob.grid),
        sigma_(prob.phi.kind() == PhiSpec::Kind::zero ? 0.0 : 1.0) {
    const auto D = gradient_matrix(grid_);
    Eigen::SparseMatrix<double> M = D.transpose() * D;
    if (sigma_ > 0.0) {
      Eigen::SparseMatrix<double> I(M.rows(), M.cols());
      I.setIdentity();
      M += sigma_ * I;
    }
    ldlt_.compute(M);
    if (ldlt_.info() != Eigen::Success) throw InvalidParameter("gradient normal matrix is not positive definite");
    const auto& av = a.values();
    mean_a_ = std::accumulate(av.begin(), av.end(), 0.0) / static_cast<double>(av.size());
  }

  InnerState cold_state(const NodeField& u0) const {
    const double rho = opts_.penalty * mean_a_;
    VectorField g = project_gradient(gradient(grid_, u0), r_);
    VectorField y(grid_);
    for (std::size_t c = 0; c < grid_.cell_count(); ++c) {
      flux_of(g.at(c), y.at(c), a_[c], prob_.p);
      for (double& x : y.at(c)) x /= rho;
    }
    return InnerState{u0, std::move(g), std::move(y), u0, NodeField(grid_), rho};
  }

  ViResult run(InnerState st) {
    const std::size_t cells = grid_.cell_count();
    const std::size_t nodes = grid_.interior_node_count();
    const auto d = static_cast<std::size_t>(grid_.dim());
    const double alpha = opts_.over_relaxation;

    auto result_of = [&](const InnerState& s, int iters) {
      Multipliers mult = multipliers_of(s);
      KktReport rep = kkt_residual(prob_, a_, r_, s.u, s.g, mult, opts_.tol_kkt);
      rep.iterations = iters;
      return ViResult{s.u, rep, s.g, std::move(mult), s};
    };

    ViResult best = result_of(st, 0);
    if (best.report.converged) return best;

    Eigen::VectorXd rhs(static_cast<Eigen::Index>(nodes));
    VectorField du(grid_);
    VectorField g_old(grid_);
    NodeField s_old(grid_);
    std::vector<double> tmp(d);

    for (int it = 1; it <= opts_.max_iter; ++it) {
      // u-update: (D^T D + sigma I) u = m/rho + D^T(g - y) + sigma (s - w)
      VectorField gy = st.g - st.y;
      const NodeField dt = gradient_transpose(grid_, gy);
      for (std::size_t i = 0; i < nodes; ++i) {
        rhs[static_cast<Eigen::Index>(i)] = prob_.m[i] / st.rho + dt[i] + sigma_ * (st.s[i] - st.w[i]);
      }
      const Eigen::VectorXd sol = ldlt_.solve(rhs);
      for (std::size_t i = 0; i < nodes; ++i) st.u[i] = sol[static_cast<Eigen::Index>(i)];

      // g-update: power prox then ball projection, on the relaxed Du.
      du = gradient(grid_, st.u);
      g_old = st.g;
      for (std::size_t c = 0; c < cells; ++c) {
        auto dc = du.at(c);
        const auto go = g_old.at(c);
        auto yc = st.y.at(c);
        for (std::size_t k = 0; k < d; ++k) {
          dc[k] = alpha * dc[k] + (1.0 - alpha) * go[k];
          tmp[k] = dc[k] + yc[k];
        }
        cell_prox(tmp, st.g.at(c), a_[c], st.rho, prob_.p, r_[c]);
        const auto gc = st.g.at(c);
        for (std::size_t k = 0; k < d; ++k) yc[k] += dc[k] - gc[k];
      }

      double node_primal = 0.0;
      double node_dual = 0.0;
      if (sigma_ > 0.0) {
        s_old = st.s;
        const double t = 1.0 / (sigma_ * st.rho);
        for (std::size_t i = 0; i < nodes; ++i) {
          const double uh = alpha * st.u[i] + (1.0 - alpha) * s_old[i];
          st.s[i] = prob_.phi.prox(uh + st.w[i], t);
          st.w[i] += uh - st.s[i];
          node_primal += (st.u[i] - st.s[i]) * (st.u[i] - st.s[i]);
          node_dual += (st.s[i] - s_old[i]) * (st.s[i] - s_old[i]);
        }
      }

      const bool check = it % 5 == 0 || it == opts_.max_iter;
      const bool adapt = it % 25 == 0 && it <= 10000;
      if (!check && !adapt) continue;

      if (check) {
        ViResult cur = result_of(st, it);
        if (cur.report.converged) return cur;
        if (cur.report.worst() < best.report.worst()) best = std::move(cur);
      }
      if (adapt) {
        const double vol = grid_.cell_volume();
        du = gradient(grid_, st.u);
        const double primal =
            std::sqrt((std::pow(weighted_norm((du - st.g).values(), vol), 2)) + node_primal * vol);
        const NodeField dg = gradient_transpose(grid_, st.g - g_old);
        const double dual = st.rho * std::sqrt(std::pow(weighted_norm(dg.values(), vol), 2) +
                                               sigma_ * sigma_ * node_dual * vol);
        double factor = 1.0;
        if (primal > 10.0 * dual) factor = 2.0;
        else if (dual > 10.0 * primal) factor = 0.5;
        if (factor != 1.0) {
          st.rho *= factor;
          for (double& x : st.y.values()) x /= factor;
          for (double& x : st.w.values()) x /= factor;
        }
      }
    }
    best.report.iterations = opts_.max_iter;
    best.report.converged = false;
    return best;
  }

private:
  Multipliers multipliers_of(const InnerState& s) const {
    VectorField flux = s.y;
    for (double& x : flux.values()) x *= s.rho;
    NodeField xi = s.w;
    xi *= sigma_ * s.rho;
    return Multipliers{std::move(flux), std::move(xi)};
  }

  const QviProblem& prob_;
  const CellField& a_;
  const RadiusField& r_;
  InnerOptions opts_;
  Grid grid_;
  double sigma_;
  double mean_a_ = 1.0;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
};

inline void check_inputs(const QviProblem& prob, const CellField& a, const RadiusField& r, const InnerOptions& opts) {
  opts.check();
  require_grid(prob.grid, a.grid());
  require_grid(prob.grid, r.grid());
  require_positive(a);
}

}  // namespace detail

/// Solves the VI on the fixed set {|g_c(v)| <= r_c}. Never throws on
/// non-convergence: the best iterate comes back with report.converged == false.
inline ViResult solve_vi(const QviProblem& prob, const CellField& a, const RadiusField& r, const InnerOptions& opts,
                         const std::optional<NodeField>& warm_start = std::nullopt) {
  detail::check_inputs(prob, a, r, opts);
  detail::AdmmSolver solver(prob, a, r, opts);
  NodeField u0 = warm_start ? *warm_start : NodeField(prob.grid);
  require_grid(prob.grid, u0.grid());
  return solver.run(solver.cold_state(u0));
}

/// Same, resuming from a previous ADMM iterate (u, split, multipliers, penalty).
inline ViResult solve_vi(const QviProblem& prob, const CellField& a, const RadiusField& r, const InnerOptions& opts,
                         const InnerState& resume) {
  detail::check_inputs(prob, a, r, opts);
  require_grid(prob.grid, resume.u.grid());
  detail::AdmmSolver solver(prob, a, r, opts);
  return solver.run(resume);
}

}  // namespace qvident
