#pragma once

// Data of the mixed quasi-variational inequality: exponent, source, the convex
// term phi and the state-dependent gradient bound c(.).

#include <qvident/errors.hpp>
#include <qvident/grid.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace qvident {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Proper convex lsc integrand phi: R -> R u {+inf} with a closed-form prox.
class PhiSpec {
public:
  enum class Kind { zero, abs, box };

  static PhiSpec zero() { return PhiSpec(Kind::zero, 0.0, 0.0, 0.0); }

  static PhiSpec abs(double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidConfig("phi abs weight must be >= 0");
    return PhiSpec(Kind::abs, lambda, 0.0, 0.0);
  }

  /// Indicator of [lo, hi]; lo <= 0 <= hi so that the zero field is admissible.
  static PhiSpec box(double lo, double hi) {
    if (!(lo <= 0.0 && 0.0 <= hi)) throw InvalidConfig("phi box needs lo <= 0 <= hi");
    return PhiSpec(Kind::box, 0.0, lo, hi);
  }

  Kind kind() const { return kind_; }
  double lambda() const { return lambda_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }

  double value(double s) const {
    switch (kind_) {
      case Kind::zero: return 0.0;
      case Kind::abs: return lambda_ * std::abs(s);
      case Kind::box: return (s >= lo_ && s <= hi_) ? 0.0 : kInfinity;
    }
    return 0.0;
  }

  /// argmin_r phi(r) + (r - s)^2 / (2t)
  double prox(double s, double t) const {
    switch (kind_) {
      case Kind::zero: return s;
      case Kind::abs: {
        const double shrink = std::abs(s) - t * lambda_;
        return shrink > 0.0 ? std::copysign(shrink, s) : 0.0;
      }
      case Kind::box: return std::clamp(s, lo_, hi_);
    }
    return s;
  }

  std::string name() const {
    switch (kind_) {
      case Kind::zero: return "zero";
      case Kind::abs: return "abs";
      case Kind::box: return "box";
    }
    return "?";
  }

private:
  PhiSpec(Kind k, double lambda, double lo, double hi) : kind_(k), lambda_(lambda), lo_(lo), hi_(hi) {}

  Kind kind_;
  double lambda_;
  double lo_;
  double hi_;
};

/// Gradient bound c(s): either a constant or clamp(alpha + beta|s|, floor, c0).
class ConstraintSpec {
public:
  enum class Kind { constant, affine_clamped };

  static ConstraintSpec constant(double c0, double r) {
    check_c0(c0);
    if (!(r > 0.0 && r <= c0)) throw InvalidConfig("constant gradient bound must satisfy 0 < r <= c0");
    return ConstraintSpec(Kind::constant, c0, r, 0.0, r);
  }

  static ConstraintSpec affine_clamped(double c0, double alpha, double beta, double floor) {
    check_c0(c0);
    if (!(floor > 0.0 && floor <= c0)) throw InvalidConfig("gradient bound floor must satisfy 0 < floor <= c0");
    if (!std::isfinite(alpha) || !std::isfinite(beta)) throw InvalidConfig("gradient bound coefficients must be finite");
    return ConstraintSpec(Kind::affine_clamped, c0, alpha, beta, floor);
  }

  Kind kind() const { return kind_; }
  double c0() const { return c0_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double floor() const { return floor_; }
  double lipschitz() const { return std::abs(beta_); }

  double operator()(double s) const {
    if (kind_ == Kind::constant) return alpha_;
    return std::clamp(alpha_ + beta_ * std::abs(s), floor_, c0_);
  }

private:
  ConstraintSpec(Kind k, double c0, double alpha, double beta, double floor)
      : kind_(k), c0_(c0), alpha_(alpha), beta_(beta), floor_(floor) {}

  static void check_c0(double c0) {
    if (!(c0 > 0.0) || !std::isfinite(c0)) throw InvalidConfig("c0 must be a positive number");
  }

  Kind kind_;
  double c0_;
  double alpha_;
  double beta_;
  double floor_;
};

struct QviProblem {
  QviProblem(const Grid& g, double p_, NodeField m_, PhiSpec phi_, ConstraintSpec constraint_)
      : grid(g), p(p_), m(std::move(m_)), phi(phi_), constraint(constraint_) {
    require_grid(grid, m.grid());
  }

  Grid grid;
  double p;
  NodeField m;
  PhiSpec phi;
  ConstraintSpec constraint;
};

struct ValidationCheck {
  std::string name;
  bool passed;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }

  const ValidationCheck* find(const std::string& name) const {
    for (const auto& c : checks) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }
};

/// Finitely checkable hypotheses on the problem data. Never throws.
inline ValidationReport validate(const QviProblem& prob) {
  ValidationReport rep;
  rep.checks.push_back({"p>1", prob.p > 1.0 && std::isfinite(prob.p), "p=" + std::to_string(prob.p)});

  bool bound_ok = true;
  double worst = 0.0;
  for (int k = 0; k <= 1000; ++k) {
    const double s = -10.0 + 0.02 * k;
    const double c = prob.constraint(s);
    if (!(c > 0.0 && c <= prob.constraint.c0())) {
      bound_ok = false;
      worst = c;
    }
  }
  rep.checks.push_back({"0<c(s)<=c0", bound_ok, bound_ok ? "sampled 1001 points" : "c=" + std::to_string(worst)});

  bool convex_ok = true;
  for (int i = 0; i <= 40 && convex_ok; ++i) {
    for (int j = 0; j <= 40; ++j) {
      const double s = -10.0 + 0.5 * i;
      const double t = -10.0 + 0.5 * j;
      const double fs = prob.phi.value(s);
      const double ft = prob.phi.value(t);
      if (!std::isfinite(fs) || !std::isfinite(ft)) continue;
      if (prob.phi.value(0.5 * (s + t)) > 0.5 * (fs + ft) + 1e-12) {
        convex_ok = false;
        break;
      }
    }
  }
  rep.checks.push_back({"phi midpoint convex", convex_ok, prob.phi.name()});

  // Every u in C has |u| <= c0 on the unit domain, so C lies in int(dom phi)
  // as soon as [-c0, c0] is inside the open box.
  bool interior_ok = true;
  std::string detail = "dom phi = R";
  if (prob.phi.kind() == PhiSpec::Kind::box) {
    const double bound = prob.constraint.c0() * 1.0;
    interior_ok = prob.phi.lo() < -bound && bound < prob.phi.hi();
    detail = "[-" + std::to_string(bound) + "," + std::to_string(bound) + "] vs (" + std::to_string(prob.phi.lo()) +
             "," + std::to_string(prob.phi.hi()) + ")";
  }
  rep.checks.push_back({"C in int(dom phi)", interior_ok, detail});
  return rep;
}

/// sum_i phi(u_i) h^dim, +inf outside dom phi.
inline double phi_field_value(const QviProblem& prob, const NodeField& u) {
  require_grid(prob.grid, u.grid());
  double s = 0.0;
  for (double v : u.values()) {
    const double f = prob.phi.value(v);
    if (!std::isfinite(f)) return kInfinity;
    s += f;
  }
  return s * prob.grid.cell_volume();
}

}  // namespace qvident
