#pragma once

// The p-Laplace type operator <T(a,u), v> = sum_c a_c |g_c(u)|^{p-2} g_c(u).g_c(v) h^dim,
// its convex potential, and numerical audits of its structural properties.

#include <qvident/grid.hpp>
#include <qvident/problem.hpp>

#include <algorithm>
#include <cmath>

namespace qvident {

namespace detail {

/// |t|^{p-2} with the continuous extension 0 at t = 0.
inline double flux_factor(double magnitude, double p) {
  return magnitude > 0.0 ? std::pow(magnitude, p - 2.0) : 0.0;
}

inline double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * y[k];
  return s;
}

/// sum_c w_c |gu_c|^{p-2} gu_c.gv_c h^dim for arbitrary (signed) cell weights.
inline double weighted_pairing(const Grid& g, double p, const CellField& w, const VectorField& gu,
                               const VectorField& gv) {
  double s = 0.0;
  for (std::size_t c = 0; c < g.cell_count(); ++c) {
    const double mag = gu.magnitude(c);
    if (mag == 0.0) continue;
    s += w[c] * flux_factor(mag, p) * dot(gu.at(c), gv.at(c));
  }
  return s * g.cell_volume();
}

inline void require_positive(const CellField& a) {
  for (double v : a.values()) {
    if (!(v > 0.0)) throw InvalidParameter("coefficient a must be positive in every cell");
  }
}

}  // namespace detail

inline double apply_T(const QviProblem& prob, const CellField& a, const NodeField& u, const NodeField& v) {
  require_grid(prob.grid, a.grid());
  detail::require_positive(a);
  return detail::weighted_pairing(prob.grid, prob.p, a, gradient(prob.grid, u), gradient(prob.grid, v));
}

/// Convex potential whose derivative is T(a,.) - m, plus the phi term.
inline double energy(const QviProblem& prob, const CellField& a, const NodeField& u) {
  require_grid(prob.grid, a.grid());
  detail::require_positive(a);
  const double phi = phi_field_value(prob, u);
  if (!std::isfinite(phi)) return kInfinity;
  const auto gu = gradient(prob.grid, u);
  double s = 0.0;
  for (std::size_t c = 0; c < prob.grid.cell_count(); ++c) s += a[c] / prob.p * std::pow(gu.magnitude(c), prob.p);
  return s * prob.grid.cell_volume() + phi - dual_pairing(prob.grid, prob.m, u);
}

/// Magnitude against which the round-off of the audits below is measured:
/// max(1, max|a|) (1 + ||grad u||_p + ||grad v||_p)^p.
inline double pairing_scale(const QviProblem& prob, const CellField& a, const NodeField& u, const NodeField& v) {
  const double amax = std::max(1.0, a.max_abs());
  const double nu = norm_lp_vector(prob.grid, gradient(prob.grid, u), prob.p);
  const double nv = norm_lp_vector(prob.grid, gradient(prob.grid, v), prob.p);
  return amax * std::pow(1.0 + nu + nv, prob.p);
}

/// <T(a,u) - T(a,v), u - v>; nonnegative for a monotone T.
inline double check_monotone(const QviProblem& prob, const CellField& a, const NodeField& u, const NodeField& v) {
  const NodeField diff = u - v;
  return apply_T(prob, a, u, diff) - apply_T(prob, a, v, diff);
}

/// |<T(a+b,u),v> - <T(a,u),v> - <T(b,u),v>|; zero up to round-off.
inline double check_linear_in_a(const QviProblem& prob, const CellField& a, const CellField& b, const NodeField& u,
                                const NodeField& v) {
  const auto gu = gradient(prob.grid, u);
  const auto gv = gradient(prob.grid, v);
  const double sum = detail::weighted_pairing(prob.grid, prob.p, a + b, gu, gv);
  const double parts = detail::weighted_pairing(prob.grid, prob.p, a, gu, gv) +
                       detail::weighted_pairing(prob.grid, prob.p, b, gu, gv);
  return std::abs(sum - parts);
}

/// RHS - LHS of
///   <T(a1-a2,u),v> <= (sum |a1-a2||g(u)|^p h)^{(p-1)/p} (sum |a1-a2||g(v)|^p h)^{1/p}.
inline double hoelder_bound_gap(const QviProblem& prob, const CellField& a1, const CellField& a2, const NodeField& u,
                                const NodeField& v) {
  const auto& g = prob.grid;
  require_grid(g, a1.grid());
  require_grid(g, a2.grid());
  const CellField delta = a1 - a2;
  const auto gu = gradient(g, u);
  const auto gv = gradient(g, v);
  const double lhs = detail::weighted_pairing(g, prob.p, delta, gu, gv);
  double su = 0.0;
  double sv = 0.0;
  for (std::size_t c = 0; c < g.cell_count(); ++c) {
    const double w = std::abs(delta[c]);
    su += w * std::pow(gu.magnitude(c), prob.p);
    sv += w * std::pow(gv.magnitude(c), prob.p);
  }
  su *= g.cell_volume();
  sv *= g.cell_volume();
  const double rhs = std::pow(su, (prob.p - 1.0) / prob.p) * std::pow(sv, 1.0 / prob.p);
  return rhs - lhs;
}

}  // namespace qvident
