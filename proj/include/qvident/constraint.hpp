#pragma once

// Cellwise realization of C = {|grad u| <= c0} and K(w) = {|grad v| <= c(w)}.

#include <qvident/grid.hpp>
#include <qvident/problem.hpp>
#include <qvident/random.hpp>

#include <algorithm>
#include <cstdint>
#include <vector>

namespace qvident {

/// Per-cell radii of the gradient balls; strictly positive.
class RadiusField {
public:
  explicit RadiusField(CellField radii) : radii_(std::move(radii)) {
    for (double r : radii_.values()) {
      if (!(r > 0.0)) throw InvalidParameter("gradient radii must be positive");
    }
  }

  RadiusField(const Grid& g, double r) : RadiusField(CellField(g, r)) {}

  const Grid& grid() const { return radii_.grid(); }
  const CellField& field() const& { return radii_; }
  CellField field() && { return std::move(radii_); }
  double operator[](std::size_t c) const { return radii_[c]; }

  double min() const { return *std::min_element(radii_.values().begin(), radii_.values().end()); }

  friend bool operator==(const RadiusField& a, const RadiusField& b) { return a.radii_ == b.radii_; }

private:
  CellField radii_;
};

/// r_c = c(average of the cell's corner values of w).
inline RadiusField radii_of(const QviProblem& prob, const NodeField& w) {
  CellField avg = cell_average(prob.grid, w);
  for (double& v : avg.values()) v = prob.constraint(v);
  return RadiusField(std::move(avg));
}

/// The constant radius c0 describing C itself.
inline RadiusField radii_of_C(const QviProblem& prob) { return RadiusField(prob.grid, prob.constraint.c0()); }

struct Feasibility {
  bool feasible;
  double max_violation;  // max_c |g_c(v)| - r_c, may be negative
};

inline Feasibility is_feasible(const Grid& g, const NodeField& v, const RadiusField& r, double tol) {
  require_grid(g, r.grid());
  const auto gv = gradient(g, v);
  double worst = -kInfinity;
  for (std::size_t c = 0; c < g.cell_count(); ++c) worst = std::max(worst, gv.magnitude(c) - r[c]);
  return {worst <= tol, worst};
}

/// Euclidean projection of each cell vector onto the ball of radius r_c.
inline VectorField project_gradient(const VectorField& w, const RadiusField& r) {
  require_grid(w.grid(), r.grid());
  VectorField out = w;
  for (std::size_t c = 0; c < w.cell_count(); ++c) {
    const double mag = w.magnitude(c);
    if (mag <= r[c]) continue;
    const double s = r[c] / mag;
    for (double& x : out.at(c)) x *= s;
  }
  return out;
}

/// Random feasible points: q with i.i.d. uniform[-1,1] node values, scaled by
/// min(1, min_c r_c / (|g_c(q)| + 1e-14)). A scaled draw is shrunk by a further
/// 1e-12 relative so that re-evaluating its gradient cannot round past r.
inline std::vector<NodeField> sample_feasible(const Grid& g, const RadiusField& r, std::uint64_t seed,
                                              std::size_t count) {
  require_grid(g, r.grid());
  if (count < 1) throw InvalidParameter("sample count must be >= 1");
  Rng rng(seed);
  std::vector<NodeField> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    NodeField q(g);
    for (double& v : q.values()) v = rng.uniform(-1.0, 1.0);
    const auto gq = gradient(g, q);
    double s = 1.0;
    for (std::size_t c = 0; c < g.cell_count(); ++c) s = std::min(s, r[c] / (gq.magnitude(c) + 1e-14));
    if (s < 1.0) s *= 1.0 - 1e-12;
    q *= s;
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace qvident
