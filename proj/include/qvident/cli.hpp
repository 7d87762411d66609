#pragma once

// Command implementations behind the qvident executable. Each returns the process
// exit code: 0 success, 1 verification failed, 2 solver non-convergence,
// 3 invalid input.

#include <qvident/constraint.hpp>
#include <qvident/inverse.hpp>
#include <qvident/io.hpp>
#include <qvident/operator.hpp>
#include <qvident/qvi.hpp>
#include <qvident/random.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace qvident::cli {

enum ExitCode : int { kOk = 0, kVerifyFailed = 1, kNotConverged = 2, kInvalidInput = 3 };

struct Streams {
  std::ostream& out = std::cout;
  std::ostream& err = std::cerr;
};

namespace detail {

inline std::uint64_t resolve_seed(const io::RunConfig& cfg, std::optional<std::uint64_t> override_seed) {
  if (override_seed) return *override_seed;
  return static_cast<std::uint64_t>(cfg.integer("solver.seed", 0));
}

/// Coefficient must be positive; when the config carries an admissible set it must
/// also lie in A.
inline void check_coefficient(const io::RunConfig& cfg, const QviProblem& prob, const CellField& a) {
  require_grid(prob.grid, a.grid());
  ::qvident::detail::require_positive(a);
  if (!cfg.has("admissible.c1")) return;
  const AdmissibleSet adm = io::build_admissible(cfg);
  for (double v : a.values()) {
    if (v < adm.c1 || v > adm.c2) throw InvalidParameter("coefficient outside [admissible.c1, admissible.c2]");
  }
  if (tv(prob.grid, a) > adm.c3) throw InvalidParameter("coefficient exceeds the TV budget admissible.c3");
}

template <class F>
int guarded(Streams io, F&& body) {
  try {
    return body();
  } catch (const std::invalid_argument& e) {
    io.err << "error: " << e.what() << "\n";
    return kInvalidInput;
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InvalidConfig("cannot open '" + path.string() + "' for writing");
  out << text;
}

}  // namespace detail

/// Forward solve at a_true, then z = (u or grad u) + sigma * N(0,1) per entry.
inline int synth(const std::filesystem::path& config, const std::filesystem::path& a_true_file, double sigma,
                 const std::filesystem::path& out_z, std::optional<std::uint64_t> seed_override = {},
                 Streams io = {}) {
  return detail::guarded(io, [&] {
    if (!(sigma >= 0.0)) throw InvalidParameter("--sigma must be >= 0");
    const auto cfg = io::RunConfig::load(config);
    const QviProblem prob = io::build_problem(cfg);
    const QviOptions opts = io::build_qvi_options(cfg);
    const MisfitMode mode = io::build_misfit_mode(cfg);
    const std::uint64_t seed = detail::resolve_seed(cfg, seed_override);
    const CellField a = io::read_cell_field(a_true_file);
    detail::check_coefficient(cfg, prob, a);

    const QviResult fwd = solve_qvi(prob, a, opts);
    if (!fwd.report.converged) {
      io.err << "error: forward solve did not converge\n";
      return static_cast<int>(kNotConverged);
    }
    Rng rng(seed);
    const std::vector<std::pair<std::string, std::string>> meta = {
        {"source", "synth"}, {"seed", std::to_string(seed)}, {"sigma", io::format_double(sigma)}};
    if (mode == MisfitMode::state) {
      NodeField z = fwd.u;
      if (sigma > 0.0) {
        for (double& v : z.values()) v += sigma * rng.normal();
      }
      io::write_field_file(out_z, z, meta);
    } else {
      VectorField z = gradient(prob.grid, fwd.u);
      if (sigma > 0.0) {
        for (double& v : z.values()) v += sigma * rng.normal();
      }
      io::write_field_file(out_z, z, meta);
    }
    return static_cast<int>(kOk);
  });
}

inline int forward(const std::filesystem::path& config, const std::filesystem::path& a_file,
                   const std::filesystem::path& out_u, const std::filesystem::path& out_report, Streams io = {}) {
  return detail::guarded(io, [&] {
    const auto cfg = io::RunConfig::load(config);
    const QviProblem prob = io::build_problem(cfg);
    const QviOptions opts = io::build_qvi_options(cfg);
    const CellField a = io::read_cell_field(a_file);
    detail::check_coefficient(cfg, prob, a);

    const QviResult res = solve_qvi(prob, a, opts);
    io::write_field_file(out_u, res.u);
    std::ostringstream rep;
    io::write_report(rep, res.report);
    detail::write_text(out_report, rep.str());
    io.err << "forward: " << res.report.outer_iterations << " outer iterations, wall time " << res.report.wall_time
           << " s\n";
    return static_cast<int>(res.report.converged ? kOk : kNotConverged);
  });
}

inline int invert(const std::filesystem::path& config, const std::filesystem::path& out_a,
                  const std::filesystem::path& out_history, Streams io = {}) {
  return detail::guarded(io, [&] {
    const auto cfg = io::RunConfig::load(config);
    const QviProblem prob = io::build_problem(cfg);
    const AdmissibleSet adm = io::build_admissible(cfg);
    const InverseConfig ic = io::build_inverse_config(cfg, prob.grid);
    try {
      const IdentifyResult res = identify(prob, ic, adm);
      io::write_field_file(out_a, res.a_out);
      std::ostringstream hist;
      io::write_history_csv(hist, res.history);
      detail::write_text(out_history, hist.str());
      io.out << "J: " << io::format_double(res.J_out) << "\nevaluations: " << res.history.size() << "\n";
      return static_cast<int>(kOk);
    } catch (const IdentificationFailed& e) {
      std::ostringstream hist;
      io::write_history_csv(hist, e.history);
      detail::write_text(out_history, hist.str());
      io.err << "error: " << e.what() << "\n";
      return static_cast<int>(kNotConverged);
    }
  });
}

struct VerifyRow {
  std::string check;
  bool passed;
  double value;
  double threshold;
};

/// Hypothesis audit of a (a, u) pair. Thresholds: u in K(u) within 10 tol_kkt;
/// Minty slack >= -1e-6 scale; monotonicity, linearity in a and the Hoelder bound at
/// 1e-12 of their pairing scale; the TV lower bound at -1e-12.
inline std::vector<VerifyRow> verify_rows(const QviProblem& prob, const CellField& a, const NodeField& u,
                                          const QviOptions& opts, std::optional<AdmissibleSet> adm,
                                          std::size_t samples, std::uint64_t seed) {
  const Grid& g = prob.grid;
  std::vector<VerifyRow> rows;

  const double feas_tol = 10.0 * opts.inner.tol_kkt;
  const double viol = is_feasible(g, u, radii_of(prob, u), 0.0).max_violation;
  rows.push_back({"self_feasibility", viol <= feas_tol, viol, feas_tol});

  const MintyReport minty = minty_check(prob, a, u, samples, seed);
  rows.push_back({"minty", minty.passes(1e-6), minty.min_slack, -1e-6 * minty.scale});

  const auto vs = sample_feasible(g, radii_of_C(prob), seed + 1, samples);
  double mean_a = 0.0;
  for (double v : a.values()) mean_a += v;
  const CellField a_mid(g, mean_a / static_cast<double>(a.size()));

  // Each audit keeps the sample with the worst value relative to its pairing scale.
  struct Worst {
    double ratio;
    double value = 0.0;
    double scale = 1.0;
    void offer(double v, double sc, bool lower_is_worse) {
      const double r = v / sc;
      if (lower_is_worse ? r < ratio : r > ratio) {
        ratio = r;
        value = v;
        scale = sc;
      }
    }
  };
  Worst mono{kInfinity}, lin{-kInfinity}, self{-kInfinity}, hold{kInfinity};
  for (const NodeField& v : vs) {
    const double scale = pairing_scale(prob, a, u, v);
    mono.offer(check_monotone(prob, a, u, v), scale, true);
    lin.offer(check_linear_in_a(prob, a, a_mid, u, v), scale, false);
    self.offer(std::abs(hoelder_bound_gap(prob, a, a, u, v)), scale, false);
    hold.offer(hoelder_bound_gap(prob, a, a_mid, u, v), scale, true);
  }
  rows.push_back({"monotone", mono.value >= -1e-12 * mono.scale, mono.value, -1e-12 * mono.scale});
  rows.push_back({"linear_in_a", lin.value <= 1e-12 * lin.scale, lin.value, 1e-12 * lin.scale});
  rows.push_back({"hoelder_self", self.value == 0.0, self.value, 0.0});
  rows.push_back({"hoelder_vs_mean", hold.value >= -1e-12 * hold.scale, hold.value, -1e-12 * hold.scale});

  if (adm) {
    bool inside = true;
    for (double v : a.values()) inside = inside && v >= adm->c1 && v <= adm->c2;
    const double gap = inside ? tv_lower_bound_gap(g, a, *adm) : -kInfinity;
    rows.push_back({"tv_lower_bound", gap >= -1e-12, gap, -1e-12});
  }
  return rows;
}

inline int verify(const std::filesystem::path& config, const std::filesystem::path& a_file,
                  const std::filesystem::path& u_file, std::size_t samples,
                  std::optional<std::uint64_t> seed_override = {}, Streams io = {}) {
  return detail::guarded(io, [&] {
    if (samples < 1) throw InvalidParameter("--samples must be >= 1");
    const auto cfg = io::RunConfig::load(config);
    const QviProblem prob = io::build_problem(cfg);
    const QviOptions opts = io::build_qvi_options(cfg);
    const CellField a = io::read_cell_field(a_file);
    const NodeField u = io::read_node_field(u_file);
    require_grid(prob.grid, a.grid());
    require_grid(prob.grid, u.grid());
    ::qvident::detail::require_positive(a);
    std::optional<AdmissibleSet> adm;
    if (cfg.has("admissible.c1")) adm = io::build_admissible(cfg);

    const auto rows = verify_rows(prob, a, u, opts, adm, samples, detail::resolve_seed(cfg, seed_override));
    bool all = true;
    io.out << std::left << std::setw(18) << "check" << std::setw(6) << "status" << "  value / threshold\n";
    for (const auto& r : rows) {
      all = all && r.passed;
      io.out << std::left << std::setw(18) << r.check << std::setw(6) << (r.passed ? "pass" : "FAIL") << "  "
             << io::format_double(r.value) << " / " << io::format_double(r.threshold) << "\n";
    }
    return static_cast<int>(all ? kOk : kVerifyFailed);
  });
}

inline std::vector<double> parse_kappa_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& part : io::split(text, ',')) {
    if (io::trim(part).empty()) continue;
    out.push_back(io::parse_double(part, "kappa list"));
  }
  return out;
}

inline int sweep(const std::filesystem::path& config, const std::vector<double>& kappas,
                 const std::filesystem::path& out_csv, Streams io = {}) {
  return detail::guarded(io, [&] {
    if (kappas.empty()) throw InvalidConfig("kappa list is empty");
    const auto cfg = io::RunConfig::load(config);
    const QviProblem prob = io::build_problem(cfg);
    const AdmissibleSet adm = io::build_admissible(cfg);
    const InverseConfig ic = io::build_inverse_config(cfg, prob.grid);
    const auto rows = kappa_sweep(prob, ic, adm, kappas);
    std::ostringstream csv;
    io::write_sweep_csv(csv, rows);
    detail::write_text(out_csv, csv.str());
    bool any = false;
    for (const auto& r : rows) {
      any = any || r.ok;
      if (!r.ok) io.err << "kappa " << io::format_double(r.kappa) << ": " << r.error << "\n";
    }
    return static_cast<int>(any ? kOk : kNotConverged);
  });
}

}  // namespace qvident::cli
