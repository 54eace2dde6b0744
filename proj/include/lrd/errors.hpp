#pragma once

#include <stdexcept>
#include <string>

namespace lrd {

/// Shapes that do not line up (unfold/fold, mode products, conv inputs).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A requested rank is outside [1, min(dims)] or a target ratio is unreachable.
class RankError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite input, non-convergence, singular systems.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed files: tensor binaries, model/plan JSON, bundles.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lrd
