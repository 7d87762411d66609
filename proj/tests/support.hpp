#pragma once

#include <qvident/grid.hpp>
#include <qvident/random.hpp>

#include <algorithm>
#include <cmath>

namespace testing_support {

inline qvident::NodeField random_node(const qvident::Grid& g, qvident::Rng& rng, double amp = 1.0) {
  qvident::NodeField f(g);
  for (double& v : f.values()) v = rng.uniform(-amp, amp);
  return f;
}

inline qvident::CellField random_cell(const qvident::Grid& g, qvident::Rng& rng, double lo, double hi) {
  qvident::CellField f(g);
  for (double& v : f.values()) v = rng.uniform(lo, hi);
  return f;
}

inline qvident::VectorField random_vector(const qvident::Grid& g, qvident::Rng& rng, double amp = 1.0) {
  qvident::VectorField f(g);
  for (double& v : f.values()) v = rng.uniform(-amp, amp);
  return f;
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace testing_support
