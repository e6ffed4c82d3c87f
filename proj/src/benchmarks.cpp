#include "fq/benchmarks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "fq/optim.hpp"
#include "fq/parallel.hpp"
#include "fq/stats.hpp"

namespace fq::bench {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogVarClamp = 50.0;  // keeps exp() finite under bad parameters
constexpr double kMaxDof = 500.0;

void validate_params(const EgarchParams& p) {
  if (!(p.nu > 2.0)) throw ConfigError("egarch: dof must exceed 2");
  if (!(std::fabs(p.gamma) < 1.0)) throw ConfigError("egarch: |persistence| must be below 1");
  for (double v : {p.mu, p.kappa, p.alpha, p.xi})
    if (!std::isfinite(v)) throw ConfigError("egarch: non-finite parameter");
}

double sample_log_variance(const Vector& y) {
  const double v = stats::variance(y);
  if (!(v > 0.0)) throw DataError("egarch: sample variance is not positive");
  return std::log(v);
}

// Filter without validation; used inside the likelihood objective where the
// transform already guarantees admissible parameters.
EgarchState filter_unchecked(const Vector& y, const EgarchParams& p, double log_s2_0) {
  const auto t_obs = y.size();
  EgarchState st;
  st.log_sigma2.resize(t_obs);
  st.z.resize(t_obs);
  const double e_abs = stats::std_t_mean_abs(p.nu);
  double log_s2 = log_s2_0;
  for (Eigen::Index t = 0; t < t_obs; ++t) {
    log_s2 = std::clamp(log_s2, -kLogVarClamp, kLogVarClamp);
    st.log_sigma2(t) = log_s2;
    const double z = (y(t) - p.mu) * std::exp(-0.5 * log_s2);
    st.z(t) = z;
    log_s2 = p.kappa + p.gamma * log_s2 + p.alpha * (std::fabs(z) - e_abs) + p.xi * z;
  }
  st.next_log_sigma2 = std::clamp(log_s2, -kLogVarClamp, kLogVarClamp);
  return st;
}

double loglik_from_state(const EgarchState& st, double nu) {
  // Same value as summing std_t_log_pdf per observation, with the
  // normalizing constant hoisted out of the loop.
  const double c = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(M_PI * (nu - 2.0));
  double ll = 0.0;
  for (Eigen::Index t = 0; t < st.z.size(); ++t)
    ll += c - 0.5 * (nu + 1.0) * std::log1p(st.z(t) * st.z(t) / (nu - 2.0)) - 0.5 * st.log_sigma2(t);
  return ll;
}

// Unconstrained <-> constrained coordinates for the likelihood search.
EgarchParams decode(const Vector& p) {
  EgarchParams out;
  out.mu = p(0);
  out.kappa = p(1);
  out.gamma = std::tanh(p(2));
  out.alpha = p(3);
  out.xi = p(4);
  out.nu = 2.0 + std::exp(std::min(p(5), std::log(kMaxDof - 2.0)));
  return out;
}

Vector encode(const EgarchParams& p) {
  Vector out(6);
  out << p.mu, p.kappa, std::atanh(std::clamp(p.gamma, -0.999999, 0.999999)), p.alpha, p.xi,
      std::log(std::max(p.nu - 2.0, 1e-8));
  return out;
}

Matrix pearson_correlation(const Matrix& z) {
  const auto n = z.cols();
  Vector mean = z.colwise().mean();
  Matrix c = z.rowwise() - mean.transpose();
  Matrix cov = c.transpose() * c / static_cast<double>(z.rows() - 1);
  Vector s = cov.diagonal().cwiseSqrt();
  Matrix r(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) r(i, j) = cov(i, j) / (s(i) * s(j));
  return cop::nearest_correlation(std::move(r));
}

Matrix to_correlation(const Matrix& q) {
  Vector s = q.diagonal().cwiseSqrt();
  Matrix r = q;
  for (Eigen::Index i = 0; i < q.rows(); ++i)
    for (Eigen::Index j = 0; j < q.cols(); ++j) r(i, j) /= s(i) * s(j);
  return r;
}

// Second-stage gaussian log-likelihood of the dynamic-correlation recursion
//   Q[t+1] = (1-a-b)*Qbar + a*z[t]z[t]' + b*Q[t]
// as a function of (a, b); returns the terminal Q as well.
double dcc_loglik(const Matrix& z, const Matrix& q_bar, double a, double b, Matrix* q_final = nullptr) {
  const auto t_obs = z.rows();
  Matrix q = q_bar;
  double ll = 0.0;
  for (Eigen::Index t = 0; t < t_obs; ++t) {
    Matrix r = to_correlation(q);
    Eigen::LLT<Matrix> llt(r);
    if (llt.info() != Eigen::Success) return -kInf;
    Vector zt = z.row(t).transpose();
    Vector solved = llt.solve(zt);
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < r.rows(); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    ll += -0.5 * (logdet + zt.dot(solved) - zt.squaredNorm());
    q = (1.0 - a - b) * q_bar + a * (zt * zt.transpose()) + b * q;
  }
  if (q_final != nullptr) *q_final = q;
  return ll;
}

}  // namespace

EgarchState egarch_filter(const Vector& y, const EgarchParams& p) {
  if (y.size() < 2) throw DataError("egarch_filter: need at least two observations");
  validate_params(p);
  return filter_unchecked(y, p, sample_log_variance(y));
}

double egarch_loglik(const Vector& y, const EgarchParams& p) {
  if (y.size() < 2) throw DataError("egarch_loglik: need at least two observations");
  validate_params(p);
  return loglik_from_state(filter_unchecked(y, p, sample_log_variance(y)), p.nu);
}

EgarchFit egarch_fit(const Vector& y) {
  if (y.size() < 20) throw DataError("egarch_fit: need at least twenty observations");
  const double log_var = sample_log_variance(y);
  const double mu0 = stats::mean(y);

  auto objective = [&](const Vector& p) {
    EgarchParams params = decode(p);
    EgarchState st = filter_unchecked(y, params, log_var);
    double ll = loglik_from_state(st, params.nu);
    return std::isfinite(ll) ? -ll : kInf;
  };

  // (gamma, alpha, xi, nu) start grid; kappa targets the sample variance as
  // the stationary level of the recursion.
  const double starts[3][4] = {{0.95, 0.10, -0.05, 8.0}, {0.90, 0.20, 0.00, 5.0}, {0.80, 0.05, 0.05, 20.0}};

  EgarchFit best;
  best.loglik = -kInf;
  optim::Options opts;
  opts.tol = 1e-7;
  opts.max_evaluations = 40000;
  for (const auto& s : starts) {
    EgarchParams p0;
    p0.mu = mu0;
    p0.gamma = s[0];
    p0.alpha = s[1];
    p0.xi = s[2];
    p0.nu = s[3];
    p0.kappa = (1.0 - p0.gamma) * log_var;
    optim::Result r = optim::nelder_mead(objective, encode(p0), opts);
    if (-r.value > best.loglik) {
      best.params = decode(r.x);
      best.loglik = -r.value;
      best.converged = r.converged;
      best.evaluations = r.evaluations;
    }
  }
  if (!std::isfinite(best.loglik)) throw FitError("egarch_fit: likelihood not finite at any candidate");
  return best;
}

double param_distance(const EgarchParams& a, const EgarchParams& b) {
  double d = 0.0;
  d = std::max(d, std::fabs(a.mu - b.mu));
  d = std::max(d, std::fabs(a.kappa - b.kappa));
  d = std::max(d, std::fabs(a.gamma - b.gamma));
  d = std::max(d, std::fabs(a.alpha - b.alpha));
  d = std::max(d, std::fabs(a.xi - b.xi));
  d = std::max(d, std::fabs(std::log(a.nu - 2.0) - std::log(b.nu - 2.0)));
  return d;
}

GarchPanelFit fit_garch_panel(const Matrix& window, CorrKind kind, std::size_t jobs) {
  const auto n = window.cols();
  if (n < 2) throw DataError("fit_garch_panel: need at least two assets");
  std::vector<EgarchFit> assets(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), jobs, [&](std::size_t k) {
    assets[k] = egarch_fit(window.col(static_cast<Eigen::Index>(k)));
  });
  return assemble_garch_panel(window, std::move(assets), kind);
}

GarchPanelFit assemble_garch_panel(const Matrix& window, std::vector<EgarchFit> assets, CorrKind kind) {
  const auto n = window.cols();
  if (n < 2) throw DataError("assemble_garch_panel: need at least two assets");
  if (assets.size() != static_cast<std::size_t>(n))
    throw DataError("assemble_garch_panel: one parameter fit per asset required");
  GarchPanelFit fit;
  fit.assets = std::move(assets);
  fit.z.resize(window.rows(), n);
  fit.next_sigma.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    EgarchState st = egarch_filter(window.col(j), fit.assets[static_cast<std::size_t>(j)].params);
    fit.z.col(j) = st.z;
    fit.next_sigma(j) = std::exp(0.5 * st.next_log_sigma2);
  }

  Matrix q_bar = pearson_correlation(fit.z);
  if (kind == CorrKind::ccc) {
    fit.corr = q_bar;
    return fit;
  }

  // Dynamic recursion: estimate (a, b) on the standardized residuals with a
  // sum-to-less-than-one transform, then roll one step past the sample.
  auto objective = [&](const Vector& p) {
    const double ea = std::exp(std::min(p(0), 30.0));
    const double eb = std::exp(std::min(p(1), 30.0));
    const double denom = 1.0 + ea + eb;
    double ll = dcc_loglik(fit.z, q_bar, ea / denom, eb / denom);
    return std::isfinite(ll) ? -ll : kInf;
  };
  optim::Options opts;
  opts.tol = 1e-7;
  optim::Result best;
  best.value = kInf;
  for (auto [a0, b0] : {std::pair{0.05, 0.90}, std::pair{0.02, 0.95}}) {
    Vector p0(2);
    p0 << std::log(a0 / (1.0 - a0 - b0)), std::log(b0 / (1.0 - a0 - b0));
    optim::Result r = optim::nelder_mead(objective, p0, opts);
    if (r.value < best.value) best = r;
  }
  const double ea = std::exp(std::min(best.x(0), 30.0));
  const double eb = std::exp(std::min(best.x(1), 30.0));
  fit.dcc_a = ea / (1.0 + ea + eb);
  fit.dcc_b = eb / (1.0 + ea + eb);
  fit.dcc_converged = best.converged;
  Matrix q_next;
  dcc_loglik(fit.z, q_bar, fit.dcc_a, fit.dcc_b, &q_next);
  fit.corr = cop::nearest_correlation(to_correlation(q_next));
  return fit;
}

cop::JointForecast garch_forecast(const GarchPanelFit& fit, std::size_t n_samples, const Rng& rng) {
  const auto n = fit.corr.rows();
  if (n == 0 || fit.assets.size() != static_cast<std::size_t>(n))
    throw DataError("garch_forecast: inconsistent panel fit");
  if (n_samples == 0) throw ConfigError("garch_forecast: need at least one sample");
  cop::JointForecast out;
  out.copula = cop::CopulaSpec::gaussian(fit.corr);
  Rng local = rng.split("garch_forecast");
  Matrix u = cop::sample_copula(out.copula, n_samples, local);
  out.samples.resize(u.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& p = fit.assets[static_cast<std::size_t>(j)].params;
    for (Eigen::Index s = 0; s < u.rows(); ++s)
      out.samples(s, j) = p.mu + fit.next_sigma(j) * stats::std_t_quantile(u(s, j), p.nu);
  }
  return out;
}

std::vector<dist::MarginalDistribution> edf_marginals(const Matrix& window) {
  if (window.rows() < 2) throw DataError("edf_marginals: need at least two observations");
  std::vector<dist::MarginalDistribution> out(static_cast<std::size_t>(window.cols()));
  for (Eigen::Index j = 0; j < window.cols(); ++j) out[static_cast<std::size_t>(j)] = dist::ecdf_marginal(window.col(j));
  return out;
}

cop::JointForecast edf_copula_forecast(const Matrix& window, std::size_t n_samples, const Rng& rng) {
  cop::CopulaSpec spec = cop::fit_gaussian_copula(window);
  Rng local = rng.split("edf_forecast");
  return cop::compose(edf_marginals(window), spec, n_samples, local);
}

}  // namespace fq::bench
