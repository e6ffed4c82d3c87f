#include "fq/latentfq.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fq/parallel.hpp"

namespace fq::lfq {

namespace {

Matrix demeaned(const Matrix& window, const Vector& means) {
  return window.rowwise() - means.transpose();
}

// Eigen-based square root factor A with A A' = cov, clipping negatives.
Matrix law_factor(const Matrix& cov) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  if (es.info() != Eigen::Success) throw FitError("node law: eigendecomposition failed");
  Vector lam = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * lam.cwiseSqrt().asDiagonal();
}

}  // namespace

FactorBasis pca(const Matrix& window) {
  const Eigen::Index t = window.rows(), n = window.cols();
  if (n < 1) throw DataError("pca: empty window");
  if (t < n) throw DataError("pca: window has fewer rows than variables (" + std::to_string(t) + " < " +
                             std::to_string(n) + ")");
  if (t < 2) throw DataError("pca: need at least two rows");
  FactorBasis basis;
  basis.means = window.colwise().mean();
  Matrix centered = demeaned(window, basis.means);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (centered.col(j).cwiseAbs().maxCoeff() == 0.0)
      throw DataError("pca: column " + std::to_string(j) + " has zero variance");
  }
  Matrix cov = centered.transpose() * centered / static_cast<double>(t - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  if (es.info() != Eigen::Success) throw FitError("pca: eigendecomposition failed");
  // Solver returns ascending eigenvalues; flip to descending.
  basis.eigenvalues = es.eigenvalues().reverse().cwiseMax(0.0);
  basis.eigenvectors = es.eigenvectors().rowwise().reverse();
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::Index lead = 0;
    for (Eigen::Index i = 1; i < n; ++i)
      if (std::abs(basis.eigenvectors(i, j)) > std::abs(basis.eigenvectors(lead, j))) lead = i;
    if (basis.eigenvectors(lead, j) < 0.0) basis.eigenvectors.col(j) = -basis.eigenvectors.col(j);
  }
  const double total = basis.eigenvalues.sum();
  if (!(total > 0.0)) throw DataError("pca: degenerate covariance");
  basis.variance_explained.resize(n);
  double cum = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    cum += basis.eigenvalues(j);
    basis.variance_explained(j) = cum / total;
  }
  return basis;
}

std::size_t select_m(const FactorBasis& basis, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("select_m: threshold must lie in (0,1]");
  for (Eigen::Index j = 0; j < basis.variance_explained.size(); ++j)
    if (basis.variance_explained(j) >= threshold - 1e-12) return static_cast<std::size_t>(j + 1);
  return static_cast<std::size_t>(basis.variance_explained.size());
}

Matrix component_scores(const Matrix& window, const FactorBasis& basis, std::size_t first, std::size_t count) {
  const auto n = static_cast<std::size_t>(basis.eigenvectors.cols());
  if (first + count > n) throw Error("component_scores: component range exceeds basis size");
  if (static_cast<std::size_t>(window.cols()) != n) throw DataError("component_scores: column count mismatch");
  return demeaned(window, basis.means) *
         basis.eigenvectors.middleCols(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count));
}

std::vector<NodeLaw> node_laws(const qreg::QuantileFitSet& fitset, const Vector& eigenvalues, const Vector& x_star,
                               double scale) {
  const auto m = static_cast<Eigen::Index>(fitset.n_regressors);
  if (eigenvalues.size() < m) throw Error("node_laws: fewer eigenvalues than regressors");
  if (x_star.size() != m) throw Error("node_laws: x_star length does not match regressor count");
  if (!(scale >= 0.0)) throw ConfigError("node_laws: scale must be nonnegative");
  Vector lam = eigenvalues.head(m);
  std::vector<NodeLaw> laws;
  laws.reserve(fitset.fits.size());
  for (const auto& fit : fitset.fits) {
    NodeLaw law;
    law.mean = fit.intercepts + fit.coefs * x_star;
    law.cov = scale * (fit.coefs * lam.asDiagonal() * fit.coefs.transpose());
    law.cov = 0.5 * (law.cov + law.cov.transpose().eval());
    Eigen::SelfAdjointEigenSolver<Matrix> es(law.cov);
    if (es.info() != Eigen::Success) throw FitError("node_laws: eigendecomposition failed");
    const double min_eig = es.eigenvalues().minCoeff();
    if (min_eig < 0.0) {
      Vector clipped = es.eigenvalues().cwiseMax(0.0);
      law.cov = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
      law.cov = 0.5 * (law.cov + law.cov.transpose().eval());
      // Roundoff-level negatives are expected for a rank-deficient product;
      // only a genuine violation counts as a repair.
      law.repaired = min_eig < -1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    }
    laws.push_back(std::move(law));
  }
  return laws;
}

std::vector<dist::MarginalDistribution> fq_al_marginals(const Matrix& window, std::size_t m,
                                                        const qreg::QuantilePartition& taus, std::size_t jobs) {
  const auto n = static_cast<std::size_t>(window.cols());
  if (m >= n) throw ConfigError("fq_al_marginals: need m < n so at least one trailing component remains");
  FactorBasis basis = pca(window);
  Matrix centered = demeaned(window, basis.means);
  Matrix scores = component_scores(window, basis, m, n - m);
  auto fitset = qreg::fit_partition(scores, centered, taus, jobs);
  Matrix nodes = qreg::rearrange(qreg::predict_nodes(fitset, Vector::Zero(static_cast<Eigen::Index>(n - m))));
  std::vector<dist::MarginalDistribution> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Vector v =
        (nodes.row(static_cast<Eigen::Index>(k)).transpose().array() + basis.means(static_cast<Eigen::Index>(k)))
            .matrix();
    out[k] = dist::build_marginal(taus.taus, v, dist::BuildMethod::pchip);
  }
  return out;
}

std::vector<dist::MarginalDistribution> fq_ab_marginals(const Matrix& window, std::size_t m,
                                                        const qreg::QuantilePartition& taus,
                                                        const BaggingConfig& config, const Rng& rng,
                                                        std::size_t* psd_repairs) {
  const auto n = static_cast<std::size_t>(window.cols());
  if (m < 1 || m > n) throw ConfigError("fq_ab_marginals: need 1 <= m <= n");
  if (config.samples_per_bag < 1 || config.bags < 1) throw ConfigError("fq_ab_marginals: need N, B >= 1");
  if (!(config.omega_scale >= 0.0)) throw ConfigError("fq_ab_marginals: omega_scale must be nonnegative");
  FactorBasis basis = pca(window);
  Matrix centered = demeaned(window, basis.means);
  Matrix scores = component_scores(window, basis, 0, m);
  auto fitset = qreg::fit_partition(scores, centered, taus, config.jobs);
  auto laws = node_laws(fitset, basis.eigenvalues, Vector::Zero(static_cast<Eigen::Index>(m)), config.omega_scale);
  if (psd_repairs) {
    std::size_t repairs = 0;
    for (const auto& law : laws) repairs += law.repaired ? 1 : 0;
    *psd_repairs = repairs;
  }

  const auto q = static_cast<Eigen::Index>(taus.size());
  const Rng base = rng.split("bag");
  std::vector<dist::MarginalDistribution> out(n);
  parallel_for(n, config.jobs, [&](std::size_t k) {
    const Rng var_rng = base.split(static_cast<std::uint64_t>(k));
    Matrix factor = law_factor(laws[k].cov);
    Vector pool(static_cast<Eigen::Index>(config.samples_per_bag * config.bags));
    Eigen::Index at = 0;
    std::vector<double> draw(static_cast<std::size_t>(q));
    for (std::size_t b = 0; b < config.bags; ++b) {
      Rng bag_rng = var_rng.split(static_cast<std::uint64_t>(b));
      Vector z(q);
      for (Eigen::Index i = 0; i < q; ++i) z(i) = bag_rng.normal();
      Vector nodes = laws[k].mean + factor * z;
      for (Eigen::Index i = 0; i < q; ++i) draw[static_cast<std::size_t>(i)] = nodes(i);
      std::sort(draw.begin(), draw.end());
      for (Eigen::Index i = 0; i < q; ++i) nodes(i) = draw[static_cast<std::size_t>(i)];
      auto marginal = dist::build_marginal(taus.taus, nodes, dist::BuildMethod::pchip);
      pool.segment(at, static_cast<Eigen::Index>(config.samples_per_bag)) =
          marginal.sample(config.samples_per_bag, bag_rng);
      at += static_cast<Eigen::Index>(config.samples_per_bag);
    }
    pool.array() += basis.means(static_cast<Eigen::Index>(k));
    out[k] = dist::ecdf_marginal(pool);
  });
  return out;
}

std::vector<dist::MarginalDistribution> exogenous_fq_marginals(const Matrix& y, const Matrix& x,
                                                               const qreg::QuantilePartition& taus,
                                                               const Vector& x_star, dist::BuildMethod method,
                                                               std::size_t jobs) {
  if (y.rows() != x.rows())
    throw DataError("exogenous_fq_marginals: response and factor panels have different lengths");
  if (x_star.size() != x.cols()) throw DataError("exogenous_fq_marginals: x_star length does not match factors");
  auto fitset = qreg::fit_partition(x, y, taus, jobs);
  Matrix nodes = qreg::rearrange(qreg::predict_nodes(fitset, x_star));
  std::vector<dist::MarginalDistribution> out(static_cast<std::size_t>(y.cols()));
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = dist::build_marginal(taus.taus, nodes.row(static_cast<Eigen::Index>(k)).transpose(), method);
  return out;
}

}  // namespace fq::lfq
