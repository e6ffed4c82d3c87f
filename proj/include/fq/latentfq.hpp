#pragma once

#include <cstddef>
#include <vector>

#include "fq/common.hpp"
#include "fq/distbuild.hpp"
#include "fq/qreg.hpp"
#include "fq/rng.hpp"

namespace fq::lfq {

// Spectral decomposition of a data window's sample covariance, with the
// window means kept for later location shifts.
struct FactorBasis {
  Matrix eigenvectors;        // n x n, columns ordered by descending eigenvalue
  Vector eigenvalues;         // descending, clipped at zero
  Vector means;               // per-column window means
  Vector variance_explained;  // cumulative fraction explained by the first k components
};

// Principal component analysis of a T x n window (demeaned internally).
// Sign convention: each eigenvector's largest-magnitude entry is positive
// (first such entry on ties).  Requires T >= n and positive variance in
// every column.
FactorBasis pca(const Matrix& window);

// Smallest m whose cumulative explained variance reaches the threshold.
std::size_t select_m(const FactorBasis& basis, double threshold);

// Scores of components [first, first+count) for the demeaned window.
Matrix component_scores(const Matrix& window, const FactorBasis& basis, std::size_t first, std::size_t count);

// Gaussian law of a variable's fitted quantile-node vector: mean from the
// regression prediction, covariance from the factor variances pushed
// through the per-level slope rows.
struct NodeLaw {
  Vector mean;  // q predicted nodes
  Matrix cov;   // q x q, positive semidefinite
  bool repaired = false;  // true if a negative eigenvalue had to be clipped
};

// One law per response variable.  With m = fitset.n_regressors, the mean is
// the node prediction at x_star and cov = scale * C diag(lambda_1..lambda_m) C'
// where C holds the variable's slope rows across the partition.  Any
// negative covariance eigenvalues (roundoff) are clipped to zero.
std::vector<NodeLaw> node_laws(const qreg::QuantileFitSet& fitset, const Vector& eigenvalues,
                               const Vector& x_star, double scale = 1.0);

// Marginals from the intercepts of quantile regressions of each demeaned
// variable on the last n-m component scores: the leading components carry
// the forecast-irrelevant uncertainty, so the intercepts approximate the
// unconditional quantiles.  Nodes are rearranged, shifted back by the
// window means, and interpolated monotonically.
std::vector<dist::MarginalDistribution> fq_al_marginals(const Matrix& window, std::size_t m,
                                                        const qreg::QuantilePartition& taus, std::size_t jobs = 1);

struct BaggingConfig {
  std::size_t samples_per_bag = 100000;  // N
  std::size_t bags = 250;                // B
  double omega_scale = 1.0;              // multiplier on the node-law covariance
  std::size_t jobs = 1;
};

// Bagged marginals: regress each demeaned variable on the first m component
// scores, draw `bags` node vectors per variable from the node law at
// x_star = 0, rearrange each draw, interpolate, sample N values per draw,
// pool the N*B values, shift by the window mean, and keep the pooled sample
// as an empirical marginal.  Deterministic given (rng, config), independent
// of the job count.  If psd_repairs is non-null it receives the number of
// node laws whose covariance needed an eigenvalue clip.
std::vector<dist::MarginalDistribution> fq_ab_marginals(const Matrix& window, std::size_t m,
                                                        const qreg::QuantilePartition& taus,
                                                        const BaggingConfig& config, const Rng& rng,
                                                        std::size_t* psd_repairs = nullptr);

// Quantile-regression marginals with user-supplied factors: regress each
// column of y on x over the partition, predict nodes at x_star, rearrange,
// interpolate.  No demeaning is applied.
std::vector<dist::MarginalDistribution> exogenous_fq_marginals(const Matrix& y, const Matrix& x,
                                                               const qreg::QuantilePartition& taus,
                                                               const Vector& x_star,
                                                               dist::BuildMethod method = dist::BuildMethod::pchip,
                                                               std::size_t jobs = 1);

}  // namespace fq::lfq
