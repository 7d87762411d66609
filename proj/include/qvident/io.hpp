#pragma once

// Text formats: field files (CSV rows under a '#' header), flat key=value run
// configurations, and key: value solver reports. Floats are written with 17
// significant digits so every file round-trips bit for bit.

#include <qvident/errors.hpp>
#include <qvident/grid.hpp>
#include <qvident/inverse.hpp>
#include <qvident/problem.hpp>
#include <qvident/qvi.hpp>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace qvident::io {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  if (t.empty()) throw InvalidConfig(what + ": empty number");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || errno == ERANGE) throw InvalidConfig(what + ": not a number: '" + t + "'");
  return v;
}

inline long long parse_int(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(t.c_str(), &end, 10);
  if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE) {
    throw InvalidConfig(what + ": not an integer: '" + t + "'");
  }
  return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

// ---------------------------------------------------------------------------
// Field files

enum class FieldKind { node, cell, vector };

inline std::string kind_name(FieldKind k) {
  switch (k) {
    case FieldKind::node: return "node";
    case FieldKind::cell: return "cell";
    case FieldKind::vector: return "vector";
  }
  return "?";
}

struct FieldFile {
  FieldKind kind;
  Grid grid;
  std::vector<double> values;
  /// Extra '# key: value' header lines, in file order.
  std::vector<std::pair<std::string, std::string>> meta;
};

inline void write_field(std::ostream& out, FieldKind kind, const Grid& g, std::span<const double> values,
                        const std::vector<std::pair<std::string, std::string>>& meta = {}) {
  out << "# kind: " << kind_name(kind) << "\n# dim: " << g.dim() << "\n# n: " << g.n() << "\n";
  for (const auto& [k, v] : meta) out << "# " << k << ": " << v << "\n";
  const std::size_t width = kind == FieldKind::vector ? static_cast<std::size_t>(g.dim()) : 1;
  for (std::size_t i = 0; i * width < values.size(); ++i) {
    out << i;
    for (std::size_t k = 0; k < width; ++k) out << ',' << format_double(values[i * width + k]);
    out << '\n';
  }
}

inline void write_field_file(const std::filesystem::path& path, FieldKind kind, const Grid& g,
                             std::span<const double> values,
                             const std::vector<std::pair<std::string, std::string>>& meta = {}) {
  std::ofstream out(path);
  if (!out) throw InvalidConfig("cannot open '" + path.string() + "' for writing");
  write_field(out, kind, g, values, meta);
  if (!out) throw InvalidConfig("failed writing '" + path.string() + "'");
}

inline void write_field_file(const std::filesystem::path& path, const NodeField& f,
                             const std::vector<std::pair<std::string, std::string>>& meta = {}) {
  write_field_file(path, FieldKind::node, f.grid(), f.values(), meta);
}
inline void write_field_file(const std::filesystem::path& path, const CellField& f,
                             const std::vector<std::pair<std::string, std::string>>& meta = {}) {
  write_field_file(path, FieldKind::cell, f.grid(), f.values(), meta);
}
inline void write_field_file(const std::filesystem::path& path, const VectorField& f,
                             const std::vector<std::pair<std::string, std::string>>& meta = {}) {
  write_field_file(path, FieldKind::vector, f.grid(), f.values(), meta);
}

inline FieldFile read_field(std::istream& in, const std::string& name = "field") {
  std::optional<FieldKind> kind;
  std::optional<long long> dim;
  std::optional<long long> n;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      const auto colon = t.find(':');
      if (colon == std::string::npos) continue;
      const std::string key = trim(t.substr(1, colon - 1));
      const std::string val = trim(t.substr(colon + 1));
      if (key == "kind") {
        if (val == "node") kind = FieldKind::node;
        else if (val == "cell") kind = FieldKind::cell;
        else if (val == "vector") kind = FieldKind::vector;
        else throw InvalidConfig(name + ": unknown field kind '" + val + "'");
      } else if (key == "dim") {
        dim = parse_int(val, name + " header dim");
      } else if (key == "n") {
        n = parse_int(val, name + " header n");
      } else {
        meta.emplace_back(key, val);
      }
      continue;
    }
    rows.push_back(t);
  }
  if (!kind || !dim || !n) throw InvalidConfig(name + ": header needs kind, dim and n");
  const Grid g(static_cast<int>(*dim), static_cast<int>(*n));
  const std::size_t width = *kind == FieldKind::vector ? static_cast<std::size_t>(g.dim()) : 1;
  const std::size_t expected = *kind == FieldKind::node ? g.interior_node_count() : g.cell_count();
  if (rows.size() != expected) {
    throw InvalidConfig(name + ": expected " + std::to_string(expected) + " rows, found " + std::to_string(rows.size()));
  }
  std::vector<double> values;
  values.reserve(expected * width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto cols = split(rows[i], ',');
    if (cols.size() != width + 1) throw InvalidConfig(name + ": row " + std::to_string(i) + " has wrong column count");
    if (parse_int(cols[0], name + " row index") != static_cast<long long>(i)) {
      throw InvalidConfig(name + ": row indices must be 0.." + std::to_string(expected - 1) + " in order");
    }
    for (std::size_t k = 1; k <= width; ++k) values.push_back(parse_double(cols[k], name + " row " + std::to_string(i)));
  }
  return FieldFile{*kind, g, std::move(values), std::move(meta)};
}

inline FieldFile read_field_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open field file '" + path.string() + "'");
  return read_field(in, path.string());
}

namespace detail {
inline FieldFile expect_kind(FieldFile f, FieldKind k, const std::string& name) {
  if (f.kind != k) throw InvalidConfig(name + ": expected a " + kind_name(k) + " field, got " + kind_name(f.kind));
  return f;
}
}  // namespace detail

inline NodeField read_node_field(const std::filesystem::path& path) {
  auto f = detail::expect_kind(read_field_file(path), FieldKind::node, path.string());
  return NodeField(f.grid, std::move(f.values));
}
inline CellField read_cell_field(const std::filesystem::path& path) {
  auto f = detail::expect_kind(read_field_file(path), FieldKind::cell, path.string());
  return CellField(f.grid, std::move(f.values));
}
inline VectorField read_vector_field(const std::filesystem::path& path) {
  auto f = detail::expect_kind(read_field_file(path), FieldKind::vector, path.string());
  return VectorField(f.grid, std::move(f.values));
}

// ---------------------------------------------------------------------------
// Run configuration

inline const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      "problem.dim",      "problem.n",          "problem.p",           "problem.phi",
      "problem.phi_lambda", "problem.phi_lo",   "problem.phi_hi",      "problem.c_variant",
      "problem.c_alpha",  "problem.c_beta",     "problem.c_floor",     "problem.c0",
      "problem.m_file",   "problem.m_const",    "admissible.c1",       "admissible.c2",
      "admissible.c3",    "inverse.kappa",      "inverse.misfit_mode", "inverse.block_size",
      "inverse.z_file",   "solver.tol_kkt",     "solver.tol_fp",       "solver.max_inner",
      "solver.max_outer", "solver.max_evals",   "solver.seed",         "solver.penalty",
      "solver.step_init", "solver.step_min",    "solver.shrink",       "solver.minty_samples"};
  return keys;
}

class RunConfig {
public:
  static RunConfig parse(std::istream& in, std::filesystem::path base_dir = {}) {
    RunConfig cfg;
    cfg.base_dir_ = std::move(base_dir);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      const std::string t = trim(hash == std::string::npos ? line : line.substr(0, hash));
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw InvalidConfig("config line " + std::to_string(lineno) + ": expected key=value");
      const std::string key = trim(t.substr(0, eq));
      const std::string val = trim(t.substr(eq + 1));
      if (!known_config_keys().contains(key)) throw InvalidConfig("unknown config key: " + key);
      if (!cfg.values_.emplace(key, val).second) throw InvalidConfig("duplicate config key: " + key);
    }
    return cfg;
  }

  static RunConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidConfig("cannot open config '" + path.string() + "'");
    return parse(in, path.parent_path());
  }

  bool has(const std::string& key) const { return values_.contains(key); }

  const std::string& require(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw InvalidConfig("missing required config key: " + key);
    return it->second;
  }

  double number(const std::string& key) const { return parse_double(require(key), key); }
  double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }
  long long integer(const std::string& key) const { return parse_int(require(key), key); }
  long long integer(const std::string& key, long long fallback) const { return has(key) ? integer(key) : fallback; }

  /// Path values are relative to the directory of the config file.
  std::filesystem::path path(const std::string& key) const {
    std::filesystem::path p = require(key);
    return p.is_absolute() || base_dir_.empty() ? p : base_dir_ / p;
  }

  void set(const std::string& key, std::string value) {
    if (!known_config_keys().contains(key)) throw InvalidConfig("unknown config key: " + key);
    values_[key] = std::move(value);
  }

private:
  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_;
};

inline Grid build_grid(const RunConfig& cfg) {
  return Grid(static_cast<int>(cfg.integer("problem.dim")), static_cast<int>(cfg.integer("problem.n")));
}

inline QviProblem build_problem(const RunConfig& cfg) {
  const Grid g = build_grid(cfg);
  const double p = cfg.number("problem.p");

  const std::string phi_name = cfg.has("problem.phi") ? cfg.require("problem.phi") : "zero";
  PhiSpec phi = PhiSpec::zero();
  if (phi_name == "abs") phi = PhiSpec::abs(cfg.number("problem.phi_lambda"));
  else if (phi_name == "box") phi = PhiSpec::box(cfg.number("problem.phi_lo"), cfg.number("problem.phi_hi"));
  else if (phi_name != "zero") throw InvalidConfig("problem.phi must be zero, abs or box");

  const double c0 = cfg.number("problem.c0");
  const std::string& variant = cfg.require("problem.c_variant");
  std::optional<ConstraintSpec> constraint;
  if (variant == "constant") {
    constraint = ConstraintSpec::constant(c0, cfg.number("problem.c_alpha"));
  } else if (variant == "affine_clamped") {
    constraint = ConstraintSpec::affine_clamped(c0, cfg.number("problem.c_alpha"), cfg.number("problem.c_beta"),
                                                cfg.number("problem.c_floor"));
  } else {
    throw InvalidConfig("problem.c_variant must be constant or affine_clamped");
  }

  const bool has_file = cfg.has("problem.m_file");
  const bool has_const = cfg.has("problem.m_const");
  if (has_file == has_const) throw InvalidConfig("exactly one of problem.m_file and problem.m_const is required");
  NodeField m = has_file ? read_node_field(cfg.path("problem.m_file")) : NodeField(g, cfg.number("problem.m_const"));
  if (!(m.grid() == g)) throw GridMismatch("problem.m_file does not match problem.dim/problem.n");
  return QviProblem(g, p, std::move(m), phi, *constraint);
}

inline AdmissibleSet build_admissible(const RunConfig& cfg) {
  AdmissibleSet adm{cfg.number("admissible.c1"), cfg.number("admissible.c2"), cfg.number("admissible.c3")};
  adm.check();
  return adm;
}

inline QviOptions build_qvi_options(const RunConfig& cfg) {
  QviOptions o;
  o.inner.tol_kkt = cfg.number("solver.tol_kkt", o.inner.tol_kkt);
  o.inner.max_iter = static_cast<int>(cfg.integer("solver.max_inner", o.inner.max_iter));
  o.inner.penalty = cfg.number("solver.penalty", o.inner.penalty);
  o.tol_fp = cfg.number("solver.tol_fp", o.tol_fp);
  o.max_outer = static_cast<int>(cfg.integer("solver.max_outer", o.max_outer));
  o.minty_samples = static_cast<std::size_t>(cfg.integer("solver.minty_samples", static_cast<long long>(o.minty_samples)));
  o.minty_seed = static_cast<std::uint64_t>(cfg.integer("solver.seed", 0));
  o.check();
  return o;
}

inline MisfitMode build_misfit_mode(const RunConfig& cfg) {
  const std::string mode = cfg.has("inverse.misfit_mode") ? cfg.require("inverse.misfit_mode") : "gradient";
  if (mode == "state") return MisfitMode::state;
  if (mode == "gradient") return MisfitMode::gradient;
  throw InvalidConfig("inverse.misfit_mode must be state or gradient");
}

/// Everything of the inverse configuration except the data z.
inline InverseConfig build_inverse_settings(const RunConfig& cfg) {
  InverseConfig ic;
  ic.kappa = cfg.number("inverse.kappa");
  ic.misfit_mode = build_misfit_mode(cfg);
  ic.block_size = static_cast<int>(cfg.integer("inverse.block_size", 1));
  ic.optimizer.max_evals = static_cast<int>(cfg.integer("solver.max_evals", ic.optimizer.max_evals));
  ic.optimizer.step_init = cfg.number("solver.step_init", ic.optimizer.step_init);
  ic.optimizer.step_min = cfg.number("solver.step_min", ic.optimizer.step_min);
  ic.optimizer.shrink = cfg.number("solver.shrink", ic.optimizer.shrink);
  ic.qvi_opts = build_qvi_options(cfg);
  return ic;
}

inline InverseConfig build_inverse_config(const RunConfig& cfg, const Grid& g) {
  InverseConfig ic = build_inverse_settings(cfg);
  const auto path = cfg.path("inverse.z_file");
  if (ic.misfit_mode == MisfitMode::state) ic.data = read_node_field(path);
  else ic.data = read_vector_field(path);
  ic.check(g);
  return ic;
}

// ---------------------------------------------------------------------------
// Reports and tables

/// Plain key: value lines. Wall time is left out so reports of identical runs are
/// byte-identical.
inline void write_report(std::ostream& out, const SolveReport& r) {
  out << "converged: " << (r.converged ? "true" : "false") << "\n";
  out << "outer_iterations: " << r.outer_iterations << "\n";
  out << "fp_residual: " << format_double(r.fp_residual()) << "\n";
  out << "fp_residual_history: ";
  for (std::size_t i = 0; i < r.fp_residual_history.size(); ++i) {
    out << (i ? "," : "") << format_double(r.fp_residual_history[i]);
  }
  out << "\n";
  out << "inner_iterations: " << r.inner.iterations << "\n";
  out << "inner_primal_residual: " << format_double(r.inner.primal_residual) << "\n";
  out << "inner_stationarity_residual: " << format_double(r.inner.stationarity_residual) << "\n";
  out << "inner_feasibility_violation: " << format_double(r.inner.feasibility_violation) << "\n";
  out << "inner_converged: " << (r.inner.converged ? "true" : "false") << "\n";
  out << "self_feasibility_violation: " << format_double(r.self_feasibility_violation) << "\n";
  out << "minty_min_slack: " << format_double(r.minty_min_slack) << "\n";
  out << "selection: " << r.selection << "\n";
}

inline std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    out[trim(line.substr(0, colon))] = trim(line.substr(colon + 1));
  }
  return out;
}

inline void write_history_csv(std::ostream& out, const IdentHistory& h) {
  out << "eval,J,misfit,tv,converged\n";
  for (const auto& row : h) {
    out << row.eval_index << ',' << format_double(row.J) << ',' << format_double(row.misfit) << ','
        << format_double(row.tv) << ',' << (row.qvi_converged ? 1 : 0) << '\n';
  }
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "kappa,J,misfit,tv,a_digest,status\n";
  for (const auto& r : rows) {
    out << format_double(r.kappa) << ',' << format_double(r.J) << ',' << format_double(r.misfit) << ','
        << format_double(r.tv) << ',' << r.a_digest << ',' << (r.ok ? "ok" : "failed") << '\n';
  }
}

}  // namespace qvident::io
