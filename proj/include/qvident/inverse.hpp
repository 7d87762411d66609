#pragma once

// Coefficient identification: minimize J(a) = misfit(u(a), z) + kappa TV(a) over
// A = {c1 <= a <= c2, TV(a) <= c3}, with u(a) the Picard selection of the QVI solution
// set. The search is a projected coordinate pattern search over block-constant a.

#include <qvident/grid.hpp>
#include <qvident/problem.hpp>
#include <qvident/qvi.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace qvident {

struct AdmissibleSet {
  double c1;
  double c2;
  double c3;

  void check() const {
    if (!(c1 > 0.0 && c1 <= c2)) throw InvalidConfig("admissible set needs 0 < c1 <= c2");
    if (!(c3 > 0.0)) throw InvalidConfig("admissible set needs a TV budget c3 > 0");
  }
};

enum class MisfitMode { state, gradient };

struct PatternSearchOptions {
  int max_evals = 2000;
  /// Initial step; a non-positive value means (c2 - c1) / 4.
  double step_init = 0.0;
  double step_min = 1e-4;
  double shrink = 0.5;
};

struct InverseConfig {
  double kappa = 1e-6;
  MisfitMode misfit_mode = MisfitMode::gradient;
  /// NodeField for the state misfit, VectorField for the gradient misfit.
  std::variant<std::monostate, NodeField, VectorField> data;
  int block_size = 1;
  PatternSearchOptions optimizer;
  QviOptions qvi_opts;

  void check(const Grid& g) const {
    if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw InvalidConfig("kappa must be a finite number >= 0");
    if (block_size < 1 || g.n() % block_size != 0) {
      throw InvalidConfig("block_size must divide n (n=" + std::to_string(g.n()) + ")");
    }
    if (std::holds_alternative<std::monostate>(data)) throw InvalidConfig("inverse data z is missing");
    const bool state_data = std::holds_alternative<NodeField>(data);
    if (state_data != (misfit_mode == MisfitMode::state)) {
      throw InvalidConfig("data kind does not match misfit mode");
    }
    const Grid& dg = state_data ? std::get<NodeField>(data).grid() : std::get<VectorField>(data).grid();
    if (!(dg == g)) throw GridMismatch("data z does not live on the problem grid");
    const auto& o = optimizer;
    if (o.max_evals < 1 || !(o.step_min > 0.0) || !(o.shrink > 0.0 && o.shrink < 1.0)) {
      throw InvalidConfig("pattern search needs max_evals >= 1, step_min > 0, shrink in (0,1)");
    }
    qvi_opts.check();
  }
};

struct HistoryRow {
  int eval_index;
  std::string a_digest;
  double J;
  double misfit;
  double tv;
  bool qvi_converged;
};

using IdentHistory = std::vector<HistoryRow>;

/// 64-bit FNV-1a of the raw value bytes, as 16 hex digits.
inline std::string field_digest(const CellField& a) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : a.values()) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Discrete total variation: sum of |jumps| across interior cell interfaces, each
/// weighted by the interface measure (1 in 1D, h in 2D).
inline double tv(const Grid& g, const CellField& a) {
  require_grid(g, a.grid());
  const int n = g.n();
  double s = 0.0;
  if (g.dim() == 1) {
    for (int i = 0; i + 1 < n; ++i) s += std::abs(a[i + 1] - a[i]);
    return s;
  }
  auto at = [&](int i, int j) { return a[static_cast<std::size_t>(j * n + i)]; };
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      if (i + 1 < n) s += std::abs(at(i + 1, j) - at(i, j));
      if (j + 1 < n) s += std::abs(at(i, j + 1) - at(i, j));
    }
  }
  return s * g.h();
}

inline double norm_l1(const Grid& g, const CellField& a) {
  double s = 0.0;
  for (double v : a.values()) s += std::abs(v);
  return s * g.cell_volume();
}

/// tv(a) - (||a||_BV - c2 |Omega|) with ||a||_BV = ||a||_L1 + tv(a); nonnegative on A.
inline double tv_lower_bound_gap(const Grid& g, const CellField& a, const AdmissibleSet& adm) {
  for (double v : a.values()) {
    if (v < adm.c1 || v > adm.c2) throw InvalidParameter("coefficient outside [c1, c2]");
  }
  const double t = tv(g, a);
  const double bv = norm_l1(g, a) + t;
  return t - (bv - adm.c2 * 1.0);
}

inline double misfit(const Grid& g, const NodeField& u, const InverseConfig& cfg, double p) {
  require_grid(g, u.grid());
  if (cfg.misfit_mode == MisfitMode::state) {
    const auto* z = std::get_if<NodeField>(&cfg.data);
    if (!z) throw GridMismatch("state misfit needs nodal data");
    const NodeField d = u - *z;
    return 0.5 * dual_pairing(g, d, d);
  }
  const auto* z = std::get_if<VectorField>(&cfg.data);
  if (!z) throw GridMismatch("gradient misfit needs cell vector data");
  return norm_lp_vector(g, gradient(g, u) - *z, p);
}

struct ObjectiveValue {
  double J;
  double misfit;
  double tv;
  NodeField u;
  SolveReport report;
};

/// J(a) = misfit(u(a)) + kappa tv(a), u(a) the Picard selection from cfg.qvi_opts.init.
/// A non-converged forward solve is reported, not thrown. When history is given, a row
/// is appended.
inline ObjectiveValue objective_J(const QviProblem& prob, const CellField& a, const InverseConfig& cfg,
                                  IdentHistory* history = nullptr) {
  QviResult fwd = solve_qvi(prob, a, cfg.qvi_opts);
  const double mis = misfit(prob.grid, fwd.u, cfg, prob.p);
  const double t = tv(prob.grid, a);
  const double J = mis + cfg.kappa * t;
  if (history) {
    history->push_back({static_cast<int>(history->size()), field_digest(a), J, mis, t, fwd.report.converged});
  }
  return ObjectiveValue{J, mis, t, std::move(fwd.u), std::move(fwd.report)};
}

/// Block-constant parametrization: blocks of block_size cells per axis.
class BlockMap {
public:
  BlockMap(const Grid& g, int block_size) : grid_(g), bs_(block_size), per_axis_(g.n() / block_size) {}

  std::size_t block_count() const {
    const auto k = static_cast<std::size_t>(per_axis_);
    return grid_.dim() == 1 ? k : k * k;
  }

  std::size_t block_of(std::size_t cell) const {
    const int c = static_cast<int>(cell);
    if (grid_.dim() == 1) return static_cast<std::size_t>(c / bs_);
    const int i = c % grid_.n();
    const int j = c / grid_.n();
    return static_cast<std::size_t>((j / bs_) * per_axis_ + i / bs_);
  }

  CellField expand(const std::vector<double>& block_values) const {
    CellField a(grid_);
    for (std::size_t c = 0; c < grid_.cell_count(); ++c) a[c] = block_values[block_of(c)];
    return a;
  }

private:
  Grid grid_;
  int bs_;
  int per_axis_;
};

struct IdentifyResult {
  CellField a_out;
  double J_out;
  double misfit_out;
  double tv_out;
  IdentHistory history;
};

/// Raised when no forward solve during identification converged.
class IdentificationFailed : public std::runtime_error {
public:
  IdentificationFailed(const std::string& what, IdentHistory h) : std::runtime_error(what), history(std::move(h)) {}
  IdentHistory history;
};

/// Projected pattern search over block values, starting from the midpoint (c1+c2)/2.
/// Each block is perturbed by +-step in turn; candidates are clamped to [c1, c2],
/// rejected when tv > c3, and accepted on a strict decrease of J (evaluations whose
/// forward solve did not converge are never accepted). A cycle without improvement
/// shrinks the step. Stops at step < step_min, max_evals, or J == 0.
inline IdentifyResult identify(const QviProblem& prob, const InverseConfig& cfg, const AdmissibleSet& adm) {
  adm.check();
  cfg.check(prob.grid);
  const BlockMap blocks(prob.grid, cfg.block_size);
  std::vector<double> b(blocks.block_count(), 0.5 * (adm.c1 + adm.c2));
  double step = cfg.optimizer.step_init > 0.0 ? cfg.optimizer.step_init : 0.25 * (adm.c2 - adm.c1);

  IdentHistory history;
  CellField a = blocks.expand(b);
  const ObjectiveValue first = objective_J(prob, a, cfg, &history);
  double best = first.report.converged ? first.J : std::numeric_limits<double>::infinity();
  double best_misfit = first.misfit;
  double best_tv = first.tv;
  int evals = 1;
  bool any_converged = first.report.converged;

  while (step >= cfg.optimizer.step_min && evals < cfg.optimizer.max_evals && best > 0.0) {
    bool improved = false;
    for (std::size_t k = 0; k < b.size() && evals < cfg.optimizer.max_evals; ++k) {
      for (double sign : {1.0, -1.0}) {
        const double cand = std::clamp(b[k] + sign * step, adm.c1, adm.c2);
        if (cand == b[k]) continue;
        std::vector<double> trial = b;
        trial[k] = cand;
        const CellField ta = blocks.expand(trial);
        if (tv(prob.grid, ta) > adm.c3) continue;
        const ObjectiveValue val = objective_J(prob, ta, cfg, &history);
        ++evals;
        any_converged = any_converged || val.report.converged;
        if (val.report.converged && val.J < best) {
          best = val.J;
          best_misfit = val.misfit;
          best_tv = val.tv;
          b = std::move(trial);
          improved = true;
          break;
        }
        if (evals >= cfg.optimizer.max_evals) break;
      }
    }
    if (!improved) step *= cfg.optimizer.shrink;
  }
  if (!any_converged) throw IdentificationFailed("no forward solve converged during identification", history);
  return IdentifyResult{blocks.expand(b), best, best_misfit, best_tv, std::move(history)};
}

struct SweepRow {
  double kappa = 0.0;
  double J = std::numeric_limits<double>::quiet_NaN();
  double misfit = std::numeric_limits<double>::quiet_NaN();
  double tv = std::numeric_limits<double>::quiet_NaN();
  std::string a_digest;
  bool ok = false;
  std::string error;
  std::optional<CellField> a_out;
};

/// identify() for each kappa in order, sharing all other data. Per-kappa failures are
/// recorded in the row rather than thrown.
inline std::vector<SweepRow> kappa_sweep(const QviProblem& prob, const InverseConfig& cfg, const AdmissibleSet& adm,
                                         const std::vector<double>& kappas) {
  if (kappas.empty()) throw InvalidConfig("kappa list is empty");
  for (double k : kappas) {
    if (!(k >= 0.0) || !std::isfinite(k)) throw InvalidConfig("kappa values must be finite and >= 0");
  }
  std::vector<SweepRow> rows;
  for (double k : kappas) {
    SweepRow row;
    row.kappa = k;
    InverseConfig c = cfg;
    c.kappa = k;
    try {
      IdentifyResult res = identify(prob, c, adm);
      row.J = res.J_out;
      row.misfit = res.misfit_out;
      row.tv = res.tv_out;
      row.a_digest = field_digest(res.a_out);
      row.ok = true;
      row.a_out = std::move(res.a_out);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace qvident
