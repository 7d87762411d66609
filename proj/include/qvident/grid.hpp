#pragma once

// Uniform grids on the unit interval / unit square with homogeneous Dirichlet
// data, discrete fields, the cellwise gradient and the discrete pairings/norms.

#include <qvident/errors.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace qvident {

/// One nodal contribution to a cell gradient: grad_c += coeff * u[node].
struct StencilEntry {
  std::size_t node;
  std::array<double, 2> coeff;
};

/// The interior nodes touching a cell (boundary nodes are dropped, they are 0).
struct CellStencil {
  std::array<StencilEntry, 4> entries{};
  std::size_t size = 0;
  std::size_t corner_count = 0;  // including boundary corners

  auto begin() const { return entries.begin(); }
  auto end() const { return entries.begin() + static_cast<std::ptrdiff_t>(size); }
};

class Grid {
public:
  Grid(int dim, int n) : dim_(dim), n_(n) {
    if (dim != 1 && dim != 2) {
      throw InvalidConfig("grid dimension must be 1 or 2, got " + std::to_string(dim));
    }
    if (n < 2) {
      throw InvalidConfig("grid needs at least 2 cells per axis, got " + std::to_string(n));
    }
    h_ = 1.0 / n;
  }

  int dim() const { return dim_; }
  int n() const { return n_; }
  double h() const { return h_; }

  std::size_t cell_count() const {
    const auto n = static_cast<std::size_t>(n_);
    return dim_ == 1 ? n : n * n;
  }

  std::size_t interior_node_count() const {
    const auto m = static_cast<std::size_t>(n_ - 1);
    return dim_ == 1 ? m : m * m;
  }

  /// Measure of one cell, h^dim.
  double cell_volume() const { return dim_ == 1 ? h_ : h_ * h_; }

  friend bool operator==(const Grid& a, const Grid& b) { return a.dim_ == b.dim_ && a.n_ == b.n_; }

  /// Gradient stencil of cell c. 1D: forward difference over the cell.
  /// 2D: gradient of the bilinear interpolant at the cell centre.
  CellStencil stencil(std::size_t c) const {
    CellStencil s;
    if (dim_ == 1) {
      const auto i = static_cast<int>(c);
      s.corner_count = 2;
      push(s, i, -1.0 / h_, 0.0);
      push(s, i + 1, 1.0 / h_, 0.0);
    } else {
      const int ci = static_cast<int>(c) % n_;
      const int cj = static_cast<int>(c) / n_;
      const double w = 0.5 / h_;
      s.corner_count = 4;
      push2(s, ci, cj, -w, -w);
      push2(s, ci + 1, cj, w, -w);
      push2(s, ci, cj + 1, -w, w);
      push2(s, ci + 1, cj + 1, w, w);
    }
    return s;
  }

private:
  void push(CellStencil& s, int full, double cx, double cy) const {
    if (full >= 1 && full <= n_ - 1) {
      s.entries[s.size++] = {static_cast<std::size_t>(full - 1), {cx, cy}};
    }
  }

  void push2(CellStencil& s, int i, int j, double cx, double cy) const {
    if (i >= 1 && i <= n_ - 1 && j >= 1 && j <= n_ - 1) {
      const auto idx = static_cast<std::size_t>((j - 1) * (n_ - 1) + (i - 1));
      s.entries[s.size++] = {idx, {cx, cy}};
    }
  }

  int dim_;
  int n_;
  double h_;
};

inline Grid make_grid(int dim, int n) { return Grid(dim, n); }

enum class Location { node, cell };

/// Scalar field on interior nodes (NodeField) or on cells (CellField).
template <Location L>
class ScalarField {
public:
  explicit ScalarField(const Grid& grid, double fill = 0.0) : grid_(grid), values_(expected_size(grid), fill) {
    check_finite();
  }

  ScalarField(const Grid& grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != expected_size(grid_)) {
      throw GridMismatch("field has " + std::to_string(values_.size()) + " values, grid expects " +
                         std::to_string(expected_size(grid_)));
    }
    check_finite();
  }

  static std::size_t expected_size(const Grid& g) {
    return L == Location::node ? g.interior_node_count() : g.cell_count();
  }

  const Grid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const& { return values_; }
  std::span<double> values() & { return values_; }
  // temporaries hand over their storage so range-for over them stays valid
  std::vector<double> values() && { return std::move(values_); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  friend bool operator==(const ScalarField& a, const ScalarField& b) {
    return a.grid_ == b.grid_ && a.values_ == b.values_;
  }

  ScalarField& operator+=(const ScalarField& o) {
    require_same(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  ScalarField& operator-=(const ScalarField& o) {
    require_same(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  ScalarField& operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
  }
  friend ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
  friend ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
  friend ScalarField operator*(double s, ScalarField a) { return a *= s; }

  void require_same(const ScalarField& o) const {
    if (!(grid_ == o.grid_)) throw GridMismatch("fields live on different grids");
  }

private:
  void check_finite() const {
    for (double v : values_) {
      if (!std::isfinite(v)) throw InvalidParameter("field values must be finite");
    }
  }

  Grid grid_;
  std::vector<double> values_;
};

using NodeField = ScalarField<Location::node>;
using CellField = ScalarField<Location::cell>;

/// A d-vector per cell, stored cell-major.
class VectorField {
public:
  explicit VectorField(const Grid& grid) : grid_(grid), values_(expected_size(grid), 0.0) {}

  VectorField(const Grid& grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != expected_size(grid_)) {
      throw GridMismatch("vector field has " + std::to_string(values_.size()) + " components, grid expects " +
                         std::to_string(expected_size(grid_)));
    }
    for (double v : values_) {
      if (!std::isfinite(v)) throw InvalidParameter("field values must be finite");
    }
  }

  static std::size_t expected_size(const Grid& g) { return g.cell_count() * static_cast<std::size_t>(g.dim()); }

  const Grid& grid() const { return grid_; }
  int dim() const { return grid_.dim(); }
  std::size_t cell_count() const { return grid_.cell_count(); }
  std::span<const double> values() const& { return values_; }
  std::span<double> values() & { return values_; }
  // temporaries hand over their storage so range-for over them stays valid
  std::vector<double> values() && { return std::move(values_); }

  std::span<const double> at(std::size_t c) const {
    return std::span<const double>(values_).subspan(c * static_cast<std::size_t>(dim()), static_cast<std::size_t>(dim()));
  }
  std::span<double> at(std::size_t c) {
    return std::span<double>(values_).subspan(c * static_cast<std::size_t>(dim()), static_cast<std::size_t>(dim()));
  }

  /// Euclidean length of the vector stored at cell c.
  double magnitude(std::size_t c) const {
    double s = 0.0;
    for (double x : at(c)) s += x * x;
    return std::sqrt(s);
  }

  friend bool operator==(const VectorField& a, const VectorField& b) {
    return a.grid_ == b.grid_ && a.values_ == b.values_;
  }

  VectorField& operator-=(const VectorField& o) {
    if (!(grid_ == o.grid_)) throw GridMismatch("fields live on different grids");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  friend VectorField operator-(VectorField a, const VectorField& b) { return a -= b; }

private:
  Grid grid_;
  std::vector<double> values_;
};

inline void require_grid(const Grid& expected, const Grid& actual) {
  if (!(expected == actual)) throw GridMismatch("field does not live on the expected grid");
}

/// Cellwise gradient of a nodal field (boundary values are zero).
inline VectorField gradient(const Grid& g, const NodeField& u) {
  require_grid(g, u.grid());
  VectorField out(g);
  const auto d = static_cast<std::size_t>(g.dim());
  for (std::size_t c = 0; c < g.cell_count(); ++c) {
    auto gc = out.at(c);
    for (const auto& e : g.stencil(c)) {
      for (std::size_t k = 0; k < d; ++k) gc[k] += e.coeff[k] * u[e.node];
    }
  }
  return out;
}

/// Plain transpose of the gradient matrix: (D^T w)_i = sum_c coeff_{c,i} . w_c.
inline NodeField gradient_transpose(const Grid& g, const VectorField& w) {
  require_grid(g, w.grid());
  NodeField out(g);
  const auto d = static_cast<std::size_t>(g.dim());
  for (std::size_t c = 0; c < g.cell_count(); ++c) {
    const auto wc = w.at(c);
    for (const auto& e : g.stencil(c)) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += e.coeff[k] * wc[k];
      out[e.node] += s;
    }
  }
  return out;
}

/// Average of the corner values of each cell, boundary corners counting as 0.
inline CellField cell_average(const Grid& g, const NodeField& u) {
  require_grid(g, u.grid());
  CellField out(g);
  for (std::size_t c = 0; c < g.cell_count(); ++c) {
    const auto s = g.stencil(c);
    double sum = 0.0;
    for (const auto& e : s) sum += u[e.node];
    out[c] = sum / static_cast<double>(s.corner_count);
  }
  return out;
}

/// Discrete <f, v> with nodal quadrature.
inline double dual_pairing(const Grid& g, const NodeField& f, const NodeField& v) {
  require_grid(g, f.grid());
  require_grid(g, v.grid());
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * v[i];
  return s * g.cell_volume();
}

/// Discrete L2 norm of a nodal field.
inline double norm_l2(const Grid& g, const NodeField& u) { return std::sqrt(dual_pairing(g, u, u)); }

/// (sum_c |w_c|^p h^dim)^(1/p) with the Euclidean norm on each cell vector.
inline double norm_lp_vector(const Grid& g, const VectorField& w, double p) {
  require_grid(g, w.grid());
  if (!(p >= 1.0)) throw InvalidParameter("L^p norm needs p >= 1");
  double s = 0.0;
  for (std::size_t c = 0; c < w.cell_count(); ++c) s += std::pow(w.magnitude(c), p);
  return std::pow(s * g.cell_volume(), 1.0 / p);
}

}  // namespace qvident
