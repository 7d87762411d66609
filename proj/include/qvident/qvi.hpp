#pragma once

// Quasi-variational layer: Picard iteration u^{k+1} = S_a(u^k) where S_a(w) solves the
// VI on K(w), and a one-sided solution test based on the Minty formulation.

#include <qvident/constraint.hpp>
#include <qvident/inner_solver.hpp>
#include <qvident/operator.hpp>
#include <qvident/problem.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace qvident {

struct QviOptions {
  InnerOptions inner;
  int max_outer = 100;
  /// Stop when ||u^{k+1} - u^k||_{L2} <= tol_fp.
  double tol_fp = 1e-8;
  /// Starting point of the iteration; zero when empty. This fixes which element of
  /// the solution set is returned when it is not a singleton.
  std::optional<NodeField> init;
  /// Samples for the Minty statistic stored in the report (0 disables it).
  std::size_t minty_samples = 16;
  std::uint64_t minty_seed = 0;

  void check() const {
    inner.check();
    if (max_outer < 1) throw InvalidConfig("max_outer must be >= 1");
    if (!(tol_fp > 0.0)) throw InvalidConfig("tol_fp must be > 0");
  }
};

struct MintyReport {
  double min_slack = std::numeric_limits<double>::infinity();
  std::size_t worst_v_index = 0;
  /// Largest 1 + |<T(a,v),v-u>| + |phi(v)-phi(u)| + |<m,v-u>| over the test points.
  double scale = 1.0;
  std::size_t points_tested = 0;
  /// max_c |g_c(u)| - r_c(u); u outside K(u) cannot be a solution at all.
  double u_violation = 0.0;
  bool u_in_K = true;

  bool passes(double rel_tol) const { return u_in_K && min_slack >= -rel_tol * scale; }
};

struct SolveReport {
  int outer_iterations = 0;
  std::vector<double> fp_residual_history;
  KktReport inner;
  double self_feasibility_violation = 0.0;
  double minty_min_slack = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  double wall_time = 0.0;
  std::string selection = "picard-from-init";

  double fp_residual() const {
    return fp_residual_history.empty() ? std::numeric_limits<double>::infinity() : fp_residual_history.back();
  }
};

struct QviResult {
  NodeField u;
  SolveReport report;
};

namespace detail {

inline double minty_slack(const QviProblem& prob, const CellField& a, const NodeField& u, double phi_u,
                          const NodeField& v, double& scale) {
  const double phi_v = phi_field_value(prob, v);
  if (!std::isfinite(phi_v)) return std::numeric_limits<double>::infinity();
  const NodeField dv = v - u;
  const double t_term = apply_T(prob, a, v, dv);
  const double m_term = dual_pairing(prob.grid, prob.m, dv);
  const double phi_term = phi_v - phi_u;
  scale = std::max(scale, 1.0 + std::abs(t_term) + std::abs(phi_term) + std::abs(m_term));
  return t_term + phi_term - m_term;
}

/// Scales v down (never up) into the ball field r.
inline NodeField shrink_into(const Grid& g, NodeField v, const RadiusField& r) {
  const auto gv = gradient(g, v);
  double s = 1.0;
  for (std::size_t c = 0; c < g.cell_count(); ++c) {
    const double mag = gv.magnitude(c);
    if (mag > 0.0) s = std::min(s, r[c] / mag);
  }
  if (s < 1.0) v *= s * (1.0 - 1e-12);
  return v;
}

}  // namespace detail

/// Evaluates the Minty slack
///   <T(a,v), v-u> + phi(v) - phi(u) - <m, v-u>
/// over test points v in K(u) and returns the smallest. Test points, in index order:
///   0           u itself (slack 0) when u lies in K(u)
///   1..6        (1 +- t) u for t in {1e-1, 1e-2, 1e-3}, shrunk into K(u)
///   7..10       when u is in K(u): S = the VI solution on the frozen set K(u), then
///               u + t(S - u) for t in {1e-1, 1e-2, 1e-3}
///   then per draw w_k of sample_feasible(radii_of(u), seed): w_k, -w_k and, when u is
///   in K(u), the segment points u + t(+-w_k - u) for t in {1e-1, 1e-2, 1e-3}.
/// Along the segment towards S the slack behaves like t (F(S) - F(u)) with F the
/// energy on K(u), so any admissible u that is not a fixed point gives a negative
/// value for small t. A solution never yields a negative slack. u outside K(u) (beyond
/// feasibility_tol) is reported through u_in_K and fails.
inline MintyReport minty_check(const QviProblem& prob, const CellField& a, const NodeField& u, std::size_t samples,
                               std::uint64_t seed, double feasibility_tol = 1e-8) {
  if (samples < 1) throw InvalidParameter("minty_check needs at least one sample");
  const Grid& g = prob.grid;
  require_grid(g, u.grid());
  const RadiusField r = radii_of(prob, u);
  const bool u_feasible = is_feasible(g, u, r, feasibility_tol).feasible;
  const double phi_u = phi_field_value(prob, u);
  constexpr double kSteps[] = {1e-1, 1e-2, 1e-3};

  MintyReport rep;
  rep.u_violation = is_feasible(g, u, r, 0.0).max_violation;
  rep.u_in_K = u_feasible;
  std::size_t index = 0;
  auto test = [&](const NodeField& v) {
    const double slack = detail::minty_slack(prob, a, u, phi_u, v, rep.scale);
    if (slack < rep.min_slack) {
      rep.min_slack = slack;
      rep.worst_v_index = index;
    }
    ++index;
    ++rep.points_tested;
  };

  if (u_feasible) test(u);
  else ++index;
  for (double t : kSteps) {
    test(detail::shrink_into(g, (1.0 + t) * u, r));
    test(detail::shrink_into(g, (1.0 - t) * u, r));
  }
  if (u_feasible) {
    const NodeField target = detail::shrink_into(g, solve_vi(prob, a, r, InnerOptions{}, u).u, r);
    test(target);
    const NodeField step = target - u;
    for (double t : kSteps) test(u + t * step);
  } else {
    index += 4;
  }
  for (const NodeField& w : sample_feasible(g, r, seed, samples)) {
    const NodeField neg = -1.0 * w;
    test(w);
    test(neg);
    if (!u_feasible) {
      index += 6;
      continue;
    }
    for (const NodeField* dir : {&w, &neg}) {
      const NodeField step = *dir - u;
      for (double t : kSteps) test(u + t * step);
    }
  }
  return rep;
}

/// Picard iteration on the variational selection, started from opts.init (zero by
/// default). Stops once the fixed-point residual is below tol_fp, u is in K(u) up to
/// the inner tolerance and the last inner solve converged. Returns the best effort with
/// converged == false otherwise.
inline QviResult solve_qvi(const QviProblem& prob, const CellField& a, const QviOptions& opts) {
  opts.check();
  const auto t0 = std::chrono::steady_clock::now();
  const Grid& g = prob.grid;
  NodeField u = opts.init ? *opts.init : NodeField(g);
  require_grid(g, u.grid());

  SolveReport rep;
  std::optional<InnerState> state;
  for (int k = 1; k <= opts.max_outer; ++k) {
    const RadiusField r = radii_of(prob, u);
    ViResult res = state ? solve_vi(prob, a, r, opts.inner, *state) : solve_vi(prob, a, r, opts.inner, u);
    const double fp = norm_l2(g, res.u - u);
    u = res.u;
    state = std::move(res.state);
    rep.outer_iterations = k;
    rep.fp_residual_history.push_back(fp);
    rep.inner = res.report;
    rep.self_feasibility_violation = std::max(0.0, is_feasible(g, u, radii_of(prob, u), 0.0).max_violation);
    rep.converged =
        fp <= opts.tol_fp && rep.self_feasibility_violation <= opts.inner.tol_kkt && rep.inner.converged;
    if (rep.converged) break;
  }
  if (opts.minty_samples > 0) rep.minty_min_slack = minty_check(prob, a, u, opts.minty_samples, opts.minty_seed).min_slack;
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return QviResult{std::move(u), std::move(rep)};
}

}  // namespace qvident
