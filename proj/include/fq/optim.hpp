#pragma once

#include <functional>

#include "fq/common.hpp"

namespace fq::optim {

struct Options {
  std::size_t max_evaluations = 20000;
  double tol = 1e-7;          // relative simplex value spread at convergence
  double initial_step = 0.25;  // per-coordinate displacement of the start simplex
};

struct Result {
  Vector x;
  double value = 0.0;
  std::size_t evaluations = 0;
  bool converged = false;
};

// Derivative-free simplex minimization (Nelder-Mead).  Non-finite objective
// values are treated as +infinity, so constrained regions can be fenced off
// inside the callable.
Result nelder_mead(const std::function<double(const Vector&)>& f, const Vector& x0, const Options& options = {});

}  // namespace fq::optim
