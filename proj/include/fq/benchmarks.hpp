#pragma once

#include <cstddef>
#include <vector>

#include "fq/common.hpp"
#include "fq/copula.hpp"
#include "fq/distbuild.hpp"
#include "fq/rng.hpp"

namespace fq::bench {

// --- Univariate asymmetric log-variance recursion with standardized
// --- student-t innovations.
//
//   log s2[t+1] = kappa + gamma*log s2[t] + alpha*(|z[t]| - E|z|) + xi*z[t]
//
// where z[t] = (y[t] - mu)/s[t] and log s2[0] is the log sample variance.

struct EgarchParams {
  double mu = 0.0;
  double kappa = 0.0;
  double gamma = 0.0;  // persistence, |gamma| < 1
  double alpha = 0.0;  // magnitude response
  double xi = 0.0;     // sign response (leverage)
  double nu = 10.0;    // innovation degrees of freedom, > 2
};

struct EgarchState {
  Vector log_sigma2;       // per-observation conditional log variance
  Vector z;                // standardized residuals
  double next_log_sigma2;  // one-step-ahead forecast
};

EgarchState egarch_filter(const Vector& y, const EgarchParams& p);

// Total log-likelihood of the sample under the filtered variances.
double egarch_loglik(const Vector& y, const EgarchParams& p);

struct EgarchFit {
  EgarchParams params;
  double loglik = 0.0;
  bool converged = false;
  std::size_t evaluations = 0;
};

// Maximum likelihood over (mu, kappa, gamma, alpha, xi, nu) from several
// deterministic starting points; the persistence and dof constraints are
// enforced through smooth transforms.
EgarchFit egarch_fit(const Vector& y);

// Scale-free distance between parameter vectors, used by refit guards.
double param_distance(const EgarchParams& a, const EgarchParams& b);

// --- Correlation layer across assets.

enum class CorrKind { ccc, dcc };

struct GarchPanelFit {
  std::vector<EgarchFit> assets;
  Matrix z;     // standardized residuals, one column per asset
  Matrix corr;  // constant correlation, or the one-step-ahead dynamic one
  double dcc_a = 0.0;
  double dcc_b = 0.0;
  bool dcc_converged = true;
  Vector next_sigma;  // per-asset one-step-ahead volatility
};

GarchPanelFit fit_garch_panel(const Matrix& window, CorrKind kind, std::size_t jobs = 1);

// Correlation layer over externally supplied per-asset parameter fits:
// filters each column with its given parameters, then fits the constant or
// dynamic correlation.  Lets a caller substitute a previous day's accepted
// parameters when a fresh fit is rejected.
GarchPanelFit assemble_garch_panel(const Matrix& window, std::vector<EgarchFit> assets, CorrKind kind);

// Joint one-step-ahead draw: gaussian copula over the (static or dynamic)
// correlation, mapped through each asset's standardized-t quantile and the
// forecast volatility.
cop::JointForecast garch_forecast(const GarchPanelFit& fit, std::size_t n_samples, const Rng& rng);

// --- Empirical benchmark: per-asset empirical marginals plus a gaussian
// --- copula fitted on normal scores.

std::vector<dist::MarginalDistribution> edf_marginals(const Matrix& window);

cop::JointForecast edf_copula_forecast(const Matrix& window, std::size_t n_samples, const Rng& rng);

}  // namespace fq::bench
