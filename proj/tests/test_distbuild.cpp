#include <doctest.h>

#include <cmath>
#include <vector>

#include "fq/distbuild.hpp"
#include "fq/qreg.hpp"
#include "fq/rng.hpp"
#include "fq/stats.hpp"

using namespace fq;

namespace {

// Gaussian-truth quantile nodes for a given partition.
std::pair<std::vector<double>, Vector> gaussian_nodes(const std::vector<double>& taus, double mu = 0.0,
                                                      double sigma = 1.0) {
  Vector v(static_cast<Eigen::Index>(taus.size()));
  for (std::size_t k = 0; k < taus.size(); ++k)
    v(static_cast<Eigen::Index>(k)) = mu + sigma * stats::normal_inv_cdf(taus[k]);
  return {taus, v};
}

}  // namespace

TEST_SUITE("distbuild") {

TEST_CASE("pchip interpolant matches an independent reference") {
  // Nine-node gaussian quantile curve; reference evaluations computed with
  // an independent monotone-cubic implementation.
  auto [taus, v] = gaussian_nodes({0.001, 0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95, 0.999});
  auto d = dist::build_marginal(taus, v, dist::BuildMethod::pchip);
  const std::vector<double> us = {0.02, 0.07, 0.2, 0.42, 0.55, 0.8, 0.93, 0.97};
  const std::vector<double> expected = {-2.371061007013539,   -1.4583485732132881, -0.8476184546026709,
                                        -0.20061720018012322, 0.12663577031417186, 0.8476184546026712,
                                        1.4583485732132884,   2.056849748119773};
  for (std::size_t i = 0; i < us.size(); ++i)
    CHECK(d.inverse_cdf(us[i]) == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("interpolation condition: nodes reproduce exactly") {
  auto [taus, v] = gaussian_nodes({0.001, 0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95, 0.999});
  for (auto method : {dist::BuildMethod::pchip, dist::BuildMethod::step}) {
    auto d = dist::build_marginal(taus, v, method);
    for (std::size_t k = 0; k < taus.size(); ++k)
      CHECK(d.inverse_cdf(taus[k]) == doctest::Approx(v(static_cast<Eigen::Index>(k))).epsilon(1e-14));
  }
}

TEST_CASE("quantile functions are nondecreasing") {
  auto [taus, v] = gaussian_nodes({0.05, 0.25, 0.5, 0.75, 0.95});
  for (auto method : {dist::BuildMethod::pchip, dist::BuildMethod::step, dist::BuildMethod::kernel}) {
    auto d = dist::build_marginal(taus, v, method);
    double prev = -1e300;
    for (int i = 0; i <= 1000; ++i) {
      double q = d.inverse_cdf(static_cast<double>(i) / 1000.0);
      CHECK(q >= prev - 1e-12);
      prev = q;
    }
  }
}

TEST_CASE("cdf and inverse_cdf are mutually consistent") {
  auto [taus, v] = gaussian_nodes({0.001, 0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95, 0.999});
  for (auto method : {dist::BuildMethod::pchip, dist::BuildMethod::kernel}) {
    auto d = dist::build_marginal(taus, v, method);
    auto [lo, hi] = d.support();
    for (int i = 1; i < 50; ++i) {
      double x = lo + (hi - lo) * static_cast<double>(i) / 50.0;
      CHECK(d.inverse_cdf(d.cdf(x)) == doctest::Approx(x).epsilon(1e-8));
    }
  }
}

TEST_CASE("step quantile assigns the value of the nearest node at or below") {
  std::vector<double> taus = {0.25, 0.5, 0.75};
  Vector v(3);
  v << 1.0, 2.0, 3.0;
  auto d = dist::build_marginal(taus, v, dist::BuildMethod::step);
  CHECK(d.inverse_cdf(0.10) == 1.0);  // below the first node
  CHECK(d.inverse_cdf(0.25) == 1.0);
  CHECK(d.inverse_cdf(0.40) == 1.0);
  CHECK(d.inverse_cdf(0.50) == 2.0);
  CHECK(d.inverse_cdf(0.60) == 2.0);
  CHECK(d.inverse_cdf(0.75) == 3.0);
  CHECK(d.inverse_cdf(0.99) == 3.0);
  CHECK(d.cdf(1.0) == doctest::Approx(0.5));
  CHECK(d.cdf(2.5) == doctest::Approx(0.75));
  CHECK(d.cdf(3.0) == 1.0);
}

TEST_CASE("tail extension is linear with the outermost slope and truncated") {
  auto [taus, v] = gaussian_nodes({0.05, 0.25, 0.5, 0.75, 0.95});
  auto d = dist::build_marginal(taus, v, dist::BuildMethod::pchip);
  auto [lo, hi] = d.support();
  CHECK(std::isfinite(lo));
  CHECK(std::isfinite(hi));
  CHECK(lo < v(0));
  CHECK(hi > v(4));
  // Left tail: quantiles below the first node fall on a straight line.
  double q1 = d.inverse_cdf(0.010);
  double q2 = d.inverse_cdf(0.030);
  double q3 = d.inverse_cdf(0.020);
  CHECK(q3 == doctest::Approx(0.5 * (q1 + q2)).epsilon(1e-10));
  // Truncation: the inverse cdf is constant below the cut probability.
  CHECK(d.inverse_cdf(0.0) == doctest::Approx(lo));
  CHECK(d.inverse_cdf(1.0) == doctest::Approx(hi));
  CHECK(d.cdf(lo - 1.0) == 0.0);
  CHECK(d.cdf(hi + 1.0) == 1.0);
}

TEST_CASE("pit clamps outside the support") {
  auto [taus, v] = gaussian_nodes({0.05, 0.5, 0.95});
  for (auto method : {dist::BuildMethod::pchip, dist::BuildMethod::step, dist::BuildMethod::kernel}) {
    auto d = dist::build_marginal(taus, v, method);
    auto [lo, hi] = d.support();
    CHECK(d.pit(lo - 10.0) == 0.0);
    CHECK(d.pit(hi + 10.0) == 1.0);
    if (method == dist::BuildMethod::step) {
      // Atomic build: mass at or below the median node reaches the next
      // node's level, so evaluate just below the atom instead.
      CHECK(d.pit(0.0) == doctest::Approx(0.95));
      CHECK(d.pit(-1e-9) == doctest::Approx(0.5));
    } else {
      double mid = d.pit(0.0);
      CHECK(mid > 0.2);
      CHECK(mid < 0.8);
    }
  }
}

TEST_CASE("continuous densities integrate to one") {
  auto [taus, v] = gaussian_nodes({0.001, 0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95, 0.999});
  for (auto method : {dist::BuildMethod::pchip, dist::BuildMethod::kernel}) {
    auto d = dist::build_marginal(taus, v, method);
    auto [lo, hi] = d.support();
    // Composite Simpson on a fine grid, plus the truncated tail mass that
    // sits on the support endpoints for interpolated builds.
    const int n = 20000;
    double h = (hi - lo) / n;
    double s = d.pdf(lo) + d.pdf(hi);
    for (int i = 1; i < n; ++i) s += d.pdf(lo + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    double integral = s * h / 3.0;
    double endpoint_mass = d.cdf(lo) + (1.0 - d.cdf(hi - 1e-12));
    CHECK(integral + endpoint_mass == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(d.pdf(0.5 * (lo + hi)) >= 0.0);
  }
}

TEST_CASE("sampling is deterministic given a seed and stays in support") {
  auto [taus, v] = gaussian_nodes({0.05, 0.25, 0.5, 0.75, 0.95});
  auto d = dist::build_marginal(taus, v, dist::BuildMethod::pchip);
  Rng r1(77), r2(77);
  Vector s1 = d.sample(500, r1), s2 = d.sample(500, r2);
  CHECK((s1 - s2).cwiseAbs().maxCoeff() == 0.0);
  auto [lo, hi] = d.support();
  CHECK(s1.minCoeff() >= lo);
  CHECK(s1.maxCoeff() <= hi);
}

TEST_CASE("shift translates the distribution exactly") {
  auto [taus, v] = gaussian_nodes({0.05, 0.25, 0.5, 0.75, 0.95});
  for (auto method : {dist::BuildMethod::pchip, dist::BuildMethod::step, dist::BuildMethod::kernel}) {
    auto d = dist::build_marginal(taus, v, method);
    auto ds = d.shift(2.5);
    for (double u : {0.1, 0.4, 0.6, 0.9})
      CHECK(ds.inverse_cdf(u) == doctest::Approx(d.inverse_cdf(u) + 2.5).epsilon(1e-10));
    CHECK(ds.cdf(2.5) == doctest::Approx(d.cdf(0.0)).epsilon(1e-9));
  }
}

TEST_CASE("ecdf marginal follows order statistics with the lower tie rule") {
  Vector s(5);
  s << 4.0, 1.0, 3.0, 2.0, 5.0;
  auto d = dist::ecdf_marginal(s);
  CHECK(d.inverse_cdf(0.2) == 1.0);
  CHECK(d.inverse_cdf(0.4) == 2.0);
  CHECK(d.inverse_cdf(0.41) == 3.0);
  CHECK(d.inverse_cdf(1.0) == 5.0);
  CHECK(d.pit(5.0) == 1.0);   // at the sample maximum
  CHECK(d.pit(0.5) == 0.0);   // below the sample minimum
  CHECK(d.cdf(3.0) == doctest::Approx(0.6));
  CHECK(d.cdf(3.5) == doctest::Approx(0.6));
}

TEST_CASE("node validation rejects bad input") {
  Vector v(3);
  v << 1.0, 0.5, 2.0;
  CHECK_THROWS_AS(dist::build_marginal({0.25, 0.5, 0.75}, v, dist::BuildMethod::pchip), DataError);
  Vector v2(2);
  v2 << 1.0, 2.0;
  CHECK_THROWS_AS(dist::build_marginal({0.5, 0.25}, v2, dist::BuildMethod::pchip), ConfigError);
  CHECK_THROWS_AS(dist::build_marginal({0.5}, Vector::Ones(1), dist::BuildMethod::pchip), ConfigError);
}

TEST_CASE("two-sample ks on identical samples") {
  Vector a(4);
  a << 1.0, 2.0, 3.0, 4.0;
  auto r = dist::ks_two_sample(a, a);
  CHECK(r.statistic == 0.0);
  CHECK(r.p_value == 1.0);
}

TEST_CASE("two-sample ks separates disjoint samples") {
  Rng rng(3);
  Vector a(200), b(200);
  for (int i = 0; i < 200; ++i) {
    a(i) = rng.normal();
    b(i) = rng.normal() + 10.0;
  }
  auto r = dist::ks_two_sample(a, b);
  CHECK(r.statistic == doctest::Approx(1.0));
  CHECK(r.p_value < 1e-10);
}

TEST_CASE("ks test holds its size under the null") {
  Rng rng(41);
  int rejections = 0;
  const int reps = 200;
  for (int rep = 0; rep < reps; ++rep) {
    Vector a(1000), b(1000);
    for (int i = 0; i < 1000; ++i) {
      a(i) = rng.normal();
      b(i) = rng.normal();
    }
    if (dist::ks_two_sample(a, b).p_value < 0.05) ++rejections;
  }
  double rate = static_cast<double>(rejections) / reps;
  CHECK(rate >= 0.02);
  CHECK(rate <= 0.09);
}

TEST_CASE("ks uniformity test for pit values") {
  Rng rng(53);
  Vector u(500);
  for (int i = 0; i < 500; ++i) u(i) = rng.uniform();
  CHECK(dist::ks_uniform(u).p_value > 0.01);
  Vector skew(500);
  for (int i = 0; i < 500; ++i) skew(i) = std::pow(rng.uniform(), 3.0);
  CHECK(dist::ks_uniform(skew).p_value < 1e-6);
}

TEST_CASE("pchip at nine tail-weighted nodes approximates a dense build") {
  auto [t9, v9] = gaussian_nodes({0.001, 0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95, 0.999});
  auto d9 = dist::build_marginal(t9, v9, dist::BuildMethod::pchip);
  auto part500 = qreg::QuantilePartition::equidistant(500);
  auto [t500, v500] = gaussian_nodes(part500.taus);
  auto d500 = dist::build_marginal(t500, v500, dist::BuildMethod::pchip);
  // The nine-node grid carries ~1.14% interpolation error (peak near the
  // 0.95-0.999 gap); the value is pinned against an independent
  // monotone-cubic implementation.
  CHECK(dist::cdf_distance(d9, d500) == doctest::Approx(0.011422).epsilon(0.05));
}

TEST_CASE("serialization exposes the node list") {
  auto [taus, v] = gaussian_nodes({0.25, 0.5, 0.75});
  auto j = dist::build_marginal(taus, v, dist::BuildMethod::pchip).to_json();
  CHECK(j["method"] == "pchip");
  CHECK(j["taus"].size() == 3);
  CHECK(j["values"].size() == 3);
}

}  // TEST_SUITE
