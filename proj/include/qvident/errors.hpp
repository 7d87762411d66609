#pragma once

#include <stdexcept>
#include <string>

namespace qvident {

/// Bad grid, problem or run configuration.
class InvalidConfig : public std::invalid_argument {
public:
  explicit InvalidConfig(const std::string& what) : std::invalid_argument(what) {}
};

/// Numeric argument outside the domain an operation is defined on.
class InvalidParameter : public std::invalid_argument {
public:
  explicit InvalidParameter(const std::string& what) : std::invalid_argument(what) {}
};

/// Fields that live on different grids (or have the wrong shape).
class GridMismatch : public std::invalid_argument {
public:
  explicit GridMismatch(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace qvident
