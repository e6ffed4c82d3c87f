#pragma once

#include <cstddef>
#include <vector>

#include "fq/common.hpp"

namespace fq::qreg {

// An ordered set of quantile levels in (0, 1).
struct QuantilePartition {
  std::vector<double> taus;

  explicit QuantilePartition(std::vector<double> levels);

  std::size_t size() const { return taus.size(); }

  // Default nine-level partition with extra weight in the tails.
  static QuantilePartition tail_weighted_9();
  // k levels i/(k+1), i = 1..k.
  static QuantilePartition equidistant(std::size_t k);
};

struct QuantileFit {
  double intercept = 0.0;
  Vector coefs;      // one per regressor (empty when m = 0)
  double loss = 0.0; // mean check loss at the solution
  bool converged = false;
};

// Thrown when the iteration cap is reached; carries the best iterate seen.
struct NonConvergenceError : FitError {
  NonConvergenceError(const std::string& what, QuantileFit best_iterate)
      : FitError(what), best(std::move(best_iterate)) {}
  QuantileFit best;
};

// Minimizes the mean check loss of y - a - X b at level tau.  Iteratively
// reweighted least squares on a smoothed loss, smoothing annealed toward
// zero, followed by a polish step that tries the exact interpolation
// through the active observations.  With no regressors the result is the
// sample quantile under the lower-value tie convention.
QuantileFit fit_quantile(const Matrix& X, const Vector& y, double tau);

// Mean check loss of the residuals u at level tau.
double pinball_loss(const Vector& u, double tau);

// Per-variable quantile-regression coefficients across a partition.
struct VariableFit {
  Vector intercepts;  // |taus|
  Matrix coefs;       // |taus| x m

  // Residuals of observation set (X, y) at the tau_index-th level.
  Vector residuals(const Matrix& X, const Vector& y, std::size_t tau_index) const;
};

struct QuantileFitSet {
  QuantilePartition partition{std::vector<double>{0.5}};
  std::vector<VariableFit> fits;  // one per response variable
  std::size_t n_obs = 0;
  std::size_t n_regressors = 0;
};

// Fits every column of Y on the common regressor block X at every level of
// the partition.  `jobs` bounds the worker threads.
QuantileFitSet fit_partition(const Matrix& X, const Matrix& Y, const QuantilePartition& partition,
                             std::size_t jobs = 1);

// Predicted quantile nodes for each variable at regressor value x_star;
// rows are variables, columns follow the partition order.
Matrix predict_nodes(const QuantileFitSet& fit, const Vector& x_star);

// Monotone rearrangement: sorts each row ascending, repairing any quantile
// crossing while leaving non-crossing rows unchanged.
Matrix rearrange(Matrix nodes);

}  // namespace fq::qreg
