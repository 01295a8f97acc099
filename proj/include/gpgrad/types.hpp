#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace gpgrad {

template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A kernel derivative does not exist (or diverges) at the requested input.
struct SingularityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The C operator cannot be inverted (zero entry in the K'' matrix); callers
// should fall back to the iterative solver.
struct SingularCError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SingularMatrixError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values appeared mid-iteration; carries the iteration index.
struct NumericalBreakdownError : std::runtime_error {
  NumericalBreakdownError(const std::string& what, Index iteration)
      : std::runtime_error(what), iteration(iteration) {}
  Index iteration;
};

}  // namespace gpgrad
