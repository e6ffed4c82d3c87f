#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace fq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Bad run configuration: unknown keys, invalid values, inconsistent settings.
struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(what) {}
};

// Bad input data: malformed files, non-numeric cells, misaligned panels.
struct DataError : Error {
  explicit DataError(const std::string& what) : Error(what) {}
};

// Numerical fitting failure: rank-deficient designs, diverging optimizers.
struct FitError : Error {
  explicit FitError(const std::string& what) : Error(what) {}
};

}  // namespace fq
