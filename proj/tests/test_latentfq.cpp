#include "fq/latentfq.hpp"

#include <cmath>

#include "doctest.h"
#include "fq/stats.hpp"

using namespace fq;

namespace {

Matrix one_factor_panel(std::size_t t, std::size_t n, double idio_sd, Rng& rng) {
  Matrix y(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    double f = rng.normal();
    for (Eigen::Index j = 0; j < y.cols(); ++j) y(i, j) = f + idio_sd * rng.normal();
  }
  return y;
}

qreg::QuantilePartition q9() { return qreg::QuantilePartition::tail_weighted_9(); }

// Non-bagged reference: interpolated marginal from the mean node vector of
// the leading-component regression, shifted by the window mean.
dist::MarginalDistribution mean_node_marginal(const Matrix& window, std::size_t m, std::size_t var) {
  auto basis = lfq::pca(window);
  Matrix centered = window.rowwise() - basis.means.transpose();
  Matrix scores = lfq::component_scores(window, basis, 0, m);
  auto fitset = qreg::fit_partition(scores, centered, q9(), 2);
  Matrix nodes = qreg::rearrange(qreg::predict_nodes(fitset, Vector::Zero(static_cast<Eigen::Index>(m))));
  Vector v = nodes.row(static_cast<Eigen::Index>(var)).transpose();
  return dist::build_marginal(q9().taus, v, dist::BuildMethod::pchip).shift(basis.means(static_cast<Eigen::Index>(var)));
}

}  // namespace

TEST_SUITE_BEGIN("latentfq");

TEST_CASE("pca recovers an exact diagonal covariance") {
  Matrix x(4, 2);
  x << 1.0, 0.0, -1.0, 0.0, 0.0, 0.5, 0.0, -0.5;
  auto basis = lfq::pca(x);
  CHECK(basis.eigenvalues(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(basis.eigenvalues(1) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK((basis.eigenvectors - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(basis.means.cwiseAbs().maxCoeff() == 0.0);
  CHECK(basis.variance_explained(0) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(basis.variance_explained(1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pca basis is orthonormal, sums to the trace, and reconstructs") {
  Rng rng(404);
  Matrix w(60, 5);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    double f = rng.normal();
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = 0.5 * f + (1.0 + 0.2 * static_cast<double>(j)) * rng.normal();
  }
  auto basis = lfq::pca(w);
  const auto& ev = basis.eigenvectors;
  CHECK((ev.transpose() * ev - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-10);
  Matrix centered = w.rowwise() - basis.means.transpose();
  Matrix cov = centered.transpose() * centered / 59.0;
  CHECK(basis.eigenvalues.sum() == doctest::Approx(cov.trace()).epsilon(1e-8));
  for (Eigen::Index j = 1; j < 5; ++j) CHECK(basis.eigenvalues(j) <= basis.eigenvalues(j - 1));
  // Full-score reconstruction of the demeaned rows.
  Matrix scores = lfq::component_scores(w, basis, 0, 5);
  CHECK((scores * ev.transpose() - centered).cwiseAbs().maxCoeff() < 1e-10);
  // Sign convention: each column's largest-magnitude entry is positive.
  for (Eigen::Index j = 0; j < 5; ++j) {
    Eigen::Index lead = 0;
    for (Eigen::Index i = 1; i < 5; ++i)
      if (std::abs(ev(i, j)) > std::abs(ev(lead, j))) lead = i;
    CHECK(ev(lead, j) > 0.0);
  }
}

TEST_CASE("pca handles tied eigenvalues and rejects degenerate input") {
  Matrix x(4, 2);
  x << 1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0;
  auto basis = lfq::pca(x);  // sample covariance (4/3) * identity
  CHECK(basis.eigenvalues(0) == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
  CHECK(basis.eigenvalues(1) == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
  CHECK((basis.eigenvectors.transpose() * basis.eigenvectors - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);

  Matrix flat(5, 2);
  flat.col(0) = Vector::LinSpaced(5, -1.0, 1.0);
  flat.col(1) = Vector::Constant(5, 3.0);
  CHECK_THROWS_AS(lfq::pca(flat), DataError);          // zero-variance column
  CHECK_THROWS_AS(lfq::pca(Matrix::Zero(2, 3)), DataError);  // fewer rows than variables
}

TEST_CASE("variance threshold selects the factor count") {
  lfq::FactorBasis basis;
  basis.variance_explained.resize(3);
  basis.variance_explained << 0.5, 0.75, 1.0;
  CHECK(lfq::select_m(basis, 0.5) == 1);
  CHECK(lfq::select_m(basis, 0.75) == 2);
  CHECK(lfq::select_m(basis, 0.76) == 3);
  CHECK(lfq::select_m(basis, 1.0) == 3);
  CHECK_THROWS_AS(lfq::select_m(basis, 0.0), ConfigError);
  CHECK_THROWS_AS(lfq::select_m(basis, 1.5), ConfigError);

  Rng rng(11);
  auto panel = one_factor_panel(1000, 8, 1.0 / 3.0, rng);
  auto pf = lfq::pca(panel);
  CHECK(pf.variance_explained(0) > 0.85);
  CHECK(pf.variance_explained(0) < 0.95);
  CHECK(lfq::select_m(pf, 0.9) == 1);
}

TEST_CASE("node law algebra: rank-one covariance and zero-regressor degeneracy") {
  qreg::QuantileFitSet fs;
  fs.partition = qreg::QuantilePartition({0.25, 0.5, 0.75});
  fs.n_obs = 100;
  fs.n_regressors = 1;
  qreg::VariableFit vf;
  vf.intercepts = Vector(3);
  vf.intercepts << -1.0, 0.0, 1.0;
  vf.coefs = Matrix::Constant(3, 1, 0.7);
  fs.fits = {vf};

  Vector lam(1);
  lam << 4.0;
  Vector x_star(1);
  x_star << 2.0;
  auto laws = lfq::node_laws(fs, lam, x_star);
  REQUIRE(laws.size() == 1);
  for (int i = 0; i < 3; ++i)
    CHECK(laws[0].mean(i) == doctest::Approx(vf.intercepts(i) + 1.4).epsilon(1e-14));
  CHECK((laws[0].cov - 1.96 * Matrix::Ones(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_FALSE(laws[0].repaired);

  auto scaled = lfq::node_laws(fs, lam, x_star, 0.25);
  CHECK((scaled[0].cov - 0.49 * Matrix::Ones(3, 3)).cwiseAbs().maxCoeff() < 1e-12);

  qreg::QuantileFitSet fs0 = fs;
  fs0.n_regressors = 0;
  fs0.fits[0].coefs = Matrix(3, 0);
  auto degenerate = lfq::node_laws(fs0, Vector(0), Vector(0));
  CHECK(degenerate[0].cov.cwiseAbs().maxCoeff() == 0.0);
  CHECK((degenerate[0].mean - vf.intercepts).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(lfq::node_laws(fs, Vector(0), x_star), Error);
  CHECK_THROWS_AS(lfq::node_laws(fs, lam, Vector(0)), Error);
}

TEST_CASE("node law covariances from fitted panels stay positive semidefinite") {
  Rng rng(21);
  auto panel = one_factor_panel(300, 5, 0.3, rng);
  auto basis = lfq::pca(panel);
  Matrix centered = panel.rowwise() - basis.means.transpose();
  Matrix scores = lfq::component_scores(panel, basis, 0, 2);
  auto fitset = qreg::fit_partition(scores, centered, q9(), 2);
  auto laws = lfq::node_laws(fitset, basis.eigenvalues, Vector::Zero(2));
  for (const auto& law : laws) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(law.cov);
    // PSD up to the roundoff of a fresh factorization.
    CHECK(es.eigenvalues().minCoeff() >= -1e-12 * (1.0 + es.eigenvalues().cwiseAbs().maxCoeff()));
    CHECK(law.cov.minCoeff() > 0.0);  // positive loadings by construction
  }
}

TEST_CASE("trailing-component marginals track the unconditional quantiles") {
  Rng rng(300);
  Matrix y(600, 3);
  Vector load(3);
  load << 1.0, 0.8, 1.2;
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    double f = rng.normal();
    for (Eigen::Index j = 0; j < 3; ++j) y(i, j) = load(j) * f + 0.2 * rng.normal();
  }
  // With the last component pure idiosyncratic noise, the intercepts should
  // land on the per-variable empirical quantiles.
  auto marg = lfq::fq_al_marginals(y, 2, q9(), 2);
  REQUIRE(marg.size() == 3);
  for (Eigen::Index j = 0; j < 3; ++j) {
    std::vector<double> col(y.col(j).data(), y.col(j).data() + y.rows());
    double iqr = stats::interquartile_range(col);
    for (double tau : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      double node = marg[static_cast<std::size_t>(j)].inverse_cdf(tau);
      double emp = stats::empirical_quantile_lower(col, tau);
      CHECK(std::abs(node - emp) < 0.1 * iqr);
    }
  }
}

TEST_CASE("independent-panel marginals have near-zero medians") {
  Rng rng(301);
  Matrix y(800, 4);
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index j = 0; j < 4; ++j) y(i, j) = rng.normal();
  auto marg = lfq::fq_al_marginals(y, 1, q9(), 2);
  for (const auto& m : marg) CHECK(std::abs(m.inverse_cdf(0.5)) < 3.0 / std::sqrt(800.0));
  CHECK_THROWS_AS(lfq::fq_al_marginals(y, 4, q9()), ConfigError);
}

TEST_CASE("location shifts in one input column move only that marginal") {
  Rng rng(302);
  auto base = one_factor_panel(350, 4, 0.3, rng);
  Matrix shifted = base;
  shifted.col(2).array() += 5.0;
  auto m0 = lfq::fq_al_marginals(base, 1, q9(), 2);
  auto m1 = lfq::fq_al_marginals(shifted, 1, q9(), 2);
  for (std::size_t k = 0; k < 4; ++k) {
    double delta = k == 2 ? 5.0 : 0.0;
    for (double u : {0.05, 0.3, 0.5, 0.7, 0.95})
      CHECK(m1[k].inverse_cdf(u) == doctest::Approx(m0[k].inverse_cdf(u) + delta).epsilon(1e-6));
  }

  lfq::BaggingConfig cfg;
  cfg.samples_per_bag = 400;
  cfg.bags = 20;
  cfg.jobs = 2;
  auto b0 = lfq::fq_ab_marginals(base, 1, q9(), cfg, Rng(5));
  auto b1 = lfq::fq_ab_marginals(shifted, 1, q9(), cfg, Rng(5));
  for (std::size_t k = 0; k < 4; ++k) {
    double delta = k == 2 ? 5.0 : 0.0;
    for (double u : {0.1, 0.5, 0.9})
      CHECK(b1[k].inverse_cdf(u) == doctest::Approx(b0[k].inverse_cdf(u) + delta).epsilon(1e-6));
  }
}

TEST_CASE("bagged marginals recover the full spread of a one-factor panel") {
  Rng rng(500);
  auto panel = one_factor_panel(500, 4, 1.0 / 3.0, rng);
  lfq::BaggingConfig cfg;
  cfg.samples_per_bag = 2000;
  cfg.bags = 60;
  cfg.jobs = 2;
  std::size_t repairs = 99;
  auto marg = lfq::fq_ab_marginals(panel, 1, q9(), cfg, Rng(42), &repairs);
  REQUIRE(marg.size() == 4);
  CHECK(repairs == 0);
  const double true_sd = std::sqrt(1.0 + 1.0 / 9.0);
  const double true_spread = 2.0 * 1.2815515655446004 * true_sd;  // q90 - q10
  for (const auto& m : marg) {
    double spread = m.inverse_cdf(0.9) - m.inverse_cdf(0.1);
    CHECK(spread == doctest::Approx(true_spread).epsilon(0.15));
  }
  // Dividing the covariance by the window length (asymptotic-estimator
  // scale) collapses the forecast far below the true dispersion; the default
  // keeps the unscaled factor covariance for exactly this reason.
  lfq::BaggingConfig tiny = cfg;
  tiny.omega_scale = 1.0 / 500.0;
  auto narrow = lfq::fq_ab_marginals(panel, 1, q9(), tiny, Rng(42));
  for (const auto& m : narrow) {
    double spread = m.inverse_cdf(0.9) - m.inverse_cdf(0.1);
    CHECK(spread < 0.6 * true_spread);
  }
}

TEST_CASE("out-of-sample PIT of bagged marginals is close to uniform") {
  Rng rng(501);
  auto panel = one_factor_panel(500, 4, 1.0 / 3.0, rng);
  lfq::BaggingConfig cfg;
  cfg.samples_per_bag = 2000;
  cfg.bags = 60;
  cfg.jobs = 2;
  auto marg = lfq::fq_ab_marginals(panel, 1, q9(), cfg, Rng(43));
  Rng fresh(777);
  auto future = one_factor_panel(300, 4, 1.0 / 3.0, fresh);
  for (std::size_t k = 0; k < 2; ++k) {
    Vector pit(300);
    for (Eigen::Index i = 0; i < 300; ++i) pit(i) = marg[k].pit(future(i, static_cast<Eigen::Index>(k)));
    auto ks = dist::ks_uniform(pit);
    CHECK(ks.p_value > 0.01);
  }
}

TEST_CASE("bagged marginal collapses to the mean-node build as the law scale shrinks") {
  Rng rng(502);
  auto panel = one_factor_panel(400, 4, 1.0 / 3.0, rng);
  auto reference = mean_node_marginal(panel, 1, 0);
  std::vector<double> dist_at_scale;
  // scale multiplies the covariance, so node-draw spread shrinks as sqrt(scale)
  for (double scale : {1.0, 0.01, 1e-6}) {
    lfq::BaggingConfig cfg;
    cfg.samples_per_bag = 3000;
    cfg.bags = 40;
    cfg.omega_scale = scale;
    cfg.jobs = 2;
    auto marg = lfq::fq_ab_marginals(panel, 1, q9(), cfg, Rng(9));
    dist_at_scale.push_back(dist::cdf_distance(marg[0], reference));
  }
  CHECK(dist_at_scale[0] > dist_at_scale[1]);
  CHECK(dist_at_scale[1] > dist_at_scale[2]);
  CHECK(dist_at_scale[2] < 0.05);
}

TEST_CASE("bagging inflates variance relative to the mean-node build") {
  Rng rng(503);
  auto panel = one_factor_panel(400, 4, 1.0 / 3.0, rng);
  lfq::BaggingConfig cfg;
  cfg.samples_per_bag = 1500;
  cfg.bags = 40;
  cfg.jobs = 2;
  auto bagged = lfq::fq_ab_marginals(panel, 1, q9(), cfg, Rng(10));
  auto reference = mean_node_marginal(panel, 1, 0);
  Rng s1(1), s2(2);
  double var_bag = stats::variance(bagged[0].sample(5000, s1));
  double var_ref = stats::variance(reference.sample(5000, s2));
  CHECK(var_bag > var_ref);
}

TEST_CASE("bagging is deterministic, job-count invariant, and seed-stable") {
  Rng rng(504);
  auto panel = one_factor_panel(300, 3, 1.0 / 3.0, rng);
  lfq::BaggingConfig one;
  one.samples_per_bag = 1000;
  one.bags = 50;
  one.jobs = 1;
  lfq::BaggingConfig three = one;
  three.jobs = 3;
  auto a = lfq::fq_ab_marginals(panel, 1, q9(), one, Rng(77));
  auto b = lfq::fq_ab_marginals(panel, 1, q9(), three, Rng(77));
  for (std::size_t k = 0; k < 3; ++k)
    for (double u : {0.01, 0.2, 0.5, 0.8, 0.99})
      CHECK(a[k].inverse_cdf(u) == b[k].inverse_cdf(u));

  // Different seed: same law up to bag-level Monte Carlo noise (~1/sqrt(B)).
  auto c = lfq::fq_ab_marginals(panel, 1, q9(), one, Rng(78));
  CHECK(dist::cdf_distance(a[0], c[0]) < 0.15);
  CHECK(dist::cdf_distance(a[0], c[0]) > 0.0);

  CHECK_THROWS_AS(lfq::fq_ab_marginals(panel, 0, q9(), one, Rng(1)), ConfigError);
  lfq::BaggingConfig zero = one;
  zero.bags = 0;
  CHECK_THROWS_AS(lfq::fq_ab_marginals(panel, 1, q9(), zero, Rng(1)), ConfigError);
}

TEST_CASE("user-factor marginals match the latent pipeline on its own scores") {
  Rng rng(505);
  auto panel = one_factor_panel(400, 4, 0.3, rng);
  auto basis = lfq::pca(panel);
  Matrix scores = lfq::component_scores(panel, basis, 0, 1);
  auto exo = lfq::exogenous_fq_marginals(panel, scores, q9(), Vector::Zero(1), dist::BuildMethod::pchip, 2);

  Matrix centered = panel.rowwise() - basis.means.transpose();
  auto fitset = qreg::fit_partition(scores, centered, q9(), 2);
  Matrix nodes = qreg::rearrange(qreg::predict_nodes(fitset, Vector::Zero(1)));
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t j = 0; j < q9().taus.size(); ++j) {
      double latent_node = nodes(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) +
                           basis.means(static_cast<Eigen::Index>(k));
      CHECK(exo[k].inverse_cdf(q9().taus[j]) == doctest::Approx(latent_node).epsilon(1e-6));
    }
}

TEST_CASE("user-factor marginals track a quadratic data-generating process") {
  Rng rng(506);
  const int t = 1500;
  Matrix x(t, 2), y(t, 1);
  for (int i = 0; i < t; ++i) {
    double z = rng.normal();
    x(i, 0) = z;
    x(i, 1) = z * z;
    y(i, 0) = 2.0 * z + z * z + 0.5 * rng.normal();
  }
  Vector star(2);
  star << 1.0, 1.0;
  auto at_one = lfq::exogenous_fq_marginals(y, x, q9(), star);
  CHECK(at_one[0].inverse_cdf(0.5) == doctest::Approx(3.0).epsilon(0.05));
  star << -0.5, 0.25;
  auto at_half = lfq::exogenous_fq_marginals(y, x, q9(), star);
  CHECK(at_half[0].inverse_cdf(0.5) == doctest::Approx(-0.75).epsilon(0.2));
  auto json = at_one[0].to_json();
  CHECK(json["taus"].size() == 9);

  CHECK_THROWS_AS(lfq::exogenous_fq_marginals(y, Matrix::Zero(t + 1, 2), q9(), star), DataError);
  CHECK_THROWS_AS(lfq::exogenous_fq_marginals(y, x, q9(), Vector::Zero(3)), DataError);
}

TEST_SUITE_END();
