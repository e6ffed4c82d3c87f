#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fq/common.hpp"
#include "fq/distbuild.hpp"
#include "fq/rng.hpp"

namespace fq::cop {

enum class Family { gaussian, gumbel, clayton };

Family family_from_string(const std::string& name);
std::string to_string(Family family);

// Dependence structure for a joint forecast.  Gaussian copulas carry a
// correlation matrix; the Archimedean families carry a scalar parameter and
// an explicit dimension.
struct CopulaSpec {
  Family family = Family::gaussian;
  Matrix correlation;  // gaussian only
  double theta = 0.0;  // gumbel: >= 1, clayton: > 0
  std::size_t archimedean_dim = 2;

  std::size_t dim() const;

  static CopulaSpec gaussian(Matrix correlation);
  static CopulaSpec gumbel(double theta, std::size_t dim = 2);
  static CopulaSpec clayton(double theta, std::size_t dim = 2);
};

// Projects a symmetric matrix onto the correlation matrices: eigenvalues
// clipped to a small positive floor, then rescaled to a unit diagonal.
Matrix nearest_correlation(Matrix m);

// Gaussian copula fit via normal scores: z = Phi^-1(rank/(T+1)) per column
// (midranks for ties), then the Pearson correlation of the scores.
CopulaSpec fit_gaussian_copula(const Matrix& data);

// s rows of copula draws, each row a vector of dependent uniforms in (0,1).
Matrix sample_copula(const CopulaSpec& spec, std::size_t s, Rng& rng);

// Population Kendall tau: gumbel 1 - 1/theta, clayton theta/(theta+2),
// gaussian 2*asin(theta)/pi with theta read as the pairwise correlation.
double kendall_tau(Family family, double theta);

// Sample Kendall tau (tau-a) in O(n log n).
double sample_kendall_tau(const Vector& x, const Vector& y);

// A multivariate one-step-ahead forecast: per-variable marginals, the
// dependence spec, and s joint draws (rows) produced from them.
struct JointForecast {
  std::vector<dist::MarginalDistribution> marginals;
  CopulaSpec copula;
  Matrix samples;  // s x n

  void write_samples_csv(const std::string& path, const std::vector<std::string>& names) const;
};

// Pushes copula draws through the marginal quantile functions.
JointForecast compose(std::vector<dist::MarginalDistribution> marginals, const CopulaSpec& spec, std::size_t s,
                      Rng& rng);

// Bivariate grid-search maximum-likelihood fit for an Archimedean family on
// pseudo-observations (columns of u in (0,1)).
struct ArchimedeanFit {
  double theta = 0.0;
  double loglik = 0.0;
};
ArchimedeanFit fit_archimedean_grid(const Matrix& u, Family family, double theta_lo, double theta_hi,
                                    std::size_t grid_points = 200);

}  // namespace fq::cop
