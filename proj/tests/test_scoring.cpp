#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "fq/rng.hpp"
#include "fq/scoring.hpp"
#include "fq/stats.hpp"

using namespace fq;

namespace {

// Deterministic integer-arithmetic sample, reproducible across languages.
Matrix lattice_sample(Eigen::Index s) {
  Matrix x(s, 2);
  for (Eigen::Index i = 0; i < s; ++i) {
    x(i, 0) = static_cast<double>((i * 73 + 11) % 997) / 997.0 - 0.5;
    x(i, 1) = static_cast<double>((i * 151 + 7) % 1009) / 1009.0 - 0.5;
  }
  return x;
}

Matrix gaussian_sample(Eigen::Index s, Eigen::Index n, double shift, Rng rng) {
  Matrix x(s, n);
  for (Eigen::Index i = 0; i < s; ++i)
    for (Eigen::Index j = 0; j < n; ++j) x(i, j) = shift + rng.normal();
  return x;
}

}  // namespace

TEST_SUITE("scoring") {

TEST_CASE("level weights follow the five canonical emphasis profiles") {
  using W = score::CrpsWeight;
  for (double a : {0.05, 0.3, 0.5, 0.77}) {
    CHECK(score::crps_weight(W::uniform, a) == 1.0);
    CHECK(score::crps_weight(W::centre, a) == doctest::Approx(a * (1 - a)).epsilon(1e-15));
    CHECK(score::crps_weight(W::left_tail, a) == doctest::Approx((1 - a) * (1 - a)).epsilon(1e-15));
    CHECK(score::crps_weight(W::right_tail, a) == doctest::Approx(a * a).epsilon(1e-15));
    CHECK(score::crps_weight(W::tails, a) == doctest::Approx((2 * a - 1) * (2 * a - 1)).epsilon(1e-15));
    // The tail profiles and twice the centre profile tile the uniform one.
    double sum = score::crps_weight(W::left_tail, a) + score::crps_weight(W::right_tail, a) +
                 2.0 * score::crps_weight(W::centre, a);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("weighted quantile score matches a cross-checked quadrature") {
  // 5000-point deterministic 1-d sample, y = 0.3, level grid of 1000
  // midpoints; references computed with an independent implementation.
  const Eigen::Index s = 5000;
  Matrix x(s, 1);
  for (Eigen::Index i = 0; i < s; ++i) x(i, 0) = static_cast<double>((i * 73 + 11) % 9973) / 9973.0 * 4.0 - 2.0;
  Vector y(1);
  y << 0.3;
  using W = score::CrpsWeight;
  CHECK(score::wcrps(x, y, W::uniform) == doctest::Approx(0.35804297368234234).epsilon(1e-13));
  CHECK(score::wcrps(x, y, W::centre) == doctest::Approx(0.06453127033807547).epsilon(1e-13));
  CHECK(score::wcrps(x, y, W::left_tail) == doctest::Approx(0.1398639967807246).epsilon(1e-13));
  CHECK(score::wcrps(x, y, W::right_tail) == doctest::Approx(0.08911643622546679).epsilon(1e-13));
  CHECK(score::wcrps(x, y, W::tails) == doctest::Approx(0.09991789233004045).epsilon(1e-13));
}

TEST_CASE("uniform weighting approximates the closed-form gaussian crps") {
  Rng rng(71);
  Matrix x = gaussian_sample(40000, 1, 0.0, rng);
  // Closed form: y(2*Phi(y)-1) + 2*phi(y) - 1/sqrt(pi).
  const std::pair<double, double> cases[] = {
      {0.0, 0.23369497725510913}, {1.0, 0.6024413576276163}, {-0.5, 0.3314035312548558}};
  for (auto [yv, crps] : cases) {
    Vector y(1);
    y << yv;
    CHECK(score::wcrps(x, y, score::CrpsWeight::uniform) == doctest::Approx(crps).epsilon(0.02));
  }
}

TEST_CASE("multivariate quantile score averages the margins") {
  Matrix x = lattice_sample(400);
  Vector y2(2);
  y2 << 0.1, -0.2;
  Matrix x0 = x.col(0);
  Matrix x1 = x.col(1);
  Vector y0(1), y1(1);
  y0 << 0.1;
  y1 << -0.2;
  double joint = score::wcrps(x, y2, score::CrpsWeight::uniform);
  double split = 0.5 * (score::wcrps(x0, y0, score::CrpsWeight::uniform) +
                        score::wcrps(x1, y1, score::CrpsWeight::uniform));
  CHECK(joint == doctest::Approx(split).epsilon(1e-14));
}

TEST_CASE("energy score matches hand-computed pair sums") {
  Matrix x(3, 2);
  x << 0.3, -0.2, -0.1, 0.4, 0.5, 0.1;
  Vector y(2);
  y << 0.2, 0.0;
  CHECK(score::energy_score(x, y) == doctest::Approx(0.1518908794901463).epsilon(1e-14));

  // Above the exact-pair limit the cross term switches to systematic
  // offsets; reference computed independently on the deterministic lattice.
  Matrix big = lattice_sample(2500);
  Vector yb(2);
  yb << 0.1, -0.2;
  CHECK(score::energy_score(big, yb) == doctest::Approx(0.16655790505905388).epsilon(1e-13));
}

TEST_CASE("systematic pair design tracks the full double sum") {
  Rng rng(72);
  Matrix x = gaussian_sample(2500, 2, 0.0, rng);
  Vector y(2);
  y << 0.4, -0.3;
  double systematic = score::energy_score(x, y);
  // Full cross term, computed here directly.
  double cross = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.rows(); ++j) cross += (x.row(i) - x.row(j)).norm();
  cross /= static_cast<double>(x.rows()) * static_cast<double>(x.rows());
  double to_y = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) to_y += (x.row(i).transpose() - y).norm();
  double full = to_y / static_cast<double>(x.rows()) - 0.5 * cross;
  CHECK(systematic == doctest::Approx(full).epsilon(0.01));
}

TEST_CASE("variogram score matches hand-computed references") {
  Matrix x(4, 3);
  x << 0.3, -0.2, 0.1, -0.1, 0.4, 0.0, 0.5, 0.1, -0.3, 0.2, 0.2, 0.2;
  Vector y(3);
  y << 0.2, 0.0, -0.1;
  CHECK(score::variogram_score(x, y, 0.5) == doctest::Approx(0.08132256682782513).epsilon(1e-14));
  CHECK(score::variogram_score(x, y, 1.0) == doctest::Approx(0.10749999999999998).epsilon(1e-14));
  CHECK(score::variogram_score(x, y, 2.0) == doctest::Approx(0.061975).epsilon(1e-14));
  CHECK_THROWS_AS(score::variogram_score(x, y, 0.0), ConfigError);
}

TEST_CASE("scores prefer the data-generating forecast on average") {
  Rng rng(73);
  const int days = 300;
  double es_true = 0.0, es_shift = 0.0, wc_true = 0.0, wc_shift = 0.0, vs_true = 0.0, vs_wrong = 0.0;
  for (int d = 0; d < days; ++d) {
    Rng day = Rng(900).split(static_cast<std::uint64_t>(d));
    Rng gen_a = day.split("a");
    Rng gen_b = day.split("b");
    Rng gen_y = day.split("y");
    Matrix truth = gaussian_sample(400, 2, 0.0, gen_a);
    Matrix shifted = gaussian_sample(400, 2, 0.7, gen_b);
    // Correlated forecast for the variogram comparison.
    Matrix dep(400, 2), indep(400, 2);
    Rng gen_c = day.split("c");
    for (int i = 0; i < 400; ++i) {
      double a = gen_c.normal(), b = gen_c.normal(), c = gen_c.normal();
      dep(i, 0) = a;
      dep(i, 1) = 0.8 * a + 0.6 * b;
      indep(i, 0) = c;
      indep(i, 1) = gen_c.normal();
    }
    double ya = gen_y.normal();
    double yb_dep = 0.8 * ya + 0.6 * gen_y.normal();
    Vector y(2);
    y << ya, yb_dep;
    es_true += score::energy_score(truth, y);
    es_shift += score::energy_score(shifted, y);
    wc_true += score::wcrps(truth, y, score::CrpsWeight::uniform);
    wc_shift += score::wcrps(shifted, y, score::CrpsWeight::uniform);
    vs_true += score::variogram_score(dep, y, 1.0);
    vs_wrong += score::variogram_score(indep, y, 1.0);
  }
  CHECK(es_true < es_shift);
  CHECK(wc_true < wc_shift);
  CHECK(vs_true < vs_wrong);
}

TEST_CASE("rule ids parse and round-trip") {
  auto rules = score::ScoringRule::standard_set();
  REQUIRE(rules.size() == 9);
  const std::vector<std::string> expected = {"wcrps_uniform", "wcrps_centre",     "wcrps_left_tail",
                                             "wcrps_right_tail", "wcrps_tails",   "es",
                                             "vs_0.5",           "vs_1",          "vs_2"};
  for (std::size_t i = 0; i < rules.size(); ++i) {
    CHECK(rules[i].id() == expected[i]);
    CHECK(score::ScoringRule::parse(expected[i]).id() == expected[i]);
  }
  CHECK_THROWS_AS(score::ScoringRule::parse("crps"), ConfigError);
  CHECK_THROWS_AS(score::ScoringRule::parse("vs_abc"), ConfigError);
  CHECK_THROWS_AS(score::ScoringRule::parse("vs_-1"), ConfigError);
  CHECK_THROWS_AS(score::ScoringRule::parse("wcrps_middle"), ConfigError);

  // apply_rule dispatches to the matching implementation.
  Matrix x = lattice_sample(300);
  Vector y(2);
  y << 0.05, 0.0;
  CHECK(score::apply_rule(score::ScoringRule::parse("es"), x, y) == doctest::Approx(score::energy_score(x, y)));
  CHECK(score::apply_rule(score::ScoringRule::parse("vs_2"), x, y) ==
        doctest::Approx(score::variogram_score(x, y, 2.0)));
  CHECK(score::apply_rule(score::ScoringRule::parse("wcrps_tails"), x, y) ==
        doctest::Approx(score::wcrps(x, y, score::CrpsWeight::tails)));
}

TEST_CASE("forecast and outcome dimensions are validated") {
  Matrix x = lattice_sample(50);
  Vector y3(3);
  y3 << 0.1, 0.2, 0.3;
  CHECK_THROWS_AS(score::energy_score(x, y3), DataError);
  CHECK_THROWS_AS(score::wcrps(Matrix(0, 2), Vector::Zero(2), score::CrpsWeight::uniform), DataError);
  Vector bad(2);
  bad << 0.1, std::nan("");
  CHECK_THROWS_AS(score::variogram_score(x, bad, 1.0), DataError);
  CHECK_THROWS_AS(score::wcrps(x, Vector::Zero(2), score::CrpsWeight::uniform, 0), ConfigError);
}

TEST_CASE("loss matrix round-trips through csv") {
  score::LossMatrix lm;
  lm.models = {"alpha", "beta", "gamma"};
  lm.dates = {"2021-01-04", "2021-01-05", "2021-01-06", "2021-01-07"};
  lm.losses.resize(4, 3);
  Rng rng(74);
  for (Eigen::Index r = 0; r < 4; ++r)
    for (Eigen::Index c = 0; c < 3; ++c) lm.losses(r, c) = rng.normal() * std::pow(10.0, r - 2);
  const std::string path = "loss_roundtrip_test.csv";
  lm.write_csv(path);
  auto back = score::LossMatrix::read_csv(path);
  CHECK(back.models == lm.models);
  CHECK(back.dates == lm.dates);
  CHECK((back.losses - lm.losses).cwiseAbs().maxCoeff() == 0.0);  // %.17g is lossless
  CHECK(back.model_index("beta") == 1);
  CHECK(back.model_index("nope") == -1);
  std::remove(path.c_str());
}

TEST_CASE("loss matrix rejects malformed input") {
  const std::string path = "loss_bad_test.csv";
  auto write = [&](const std::string& text) {
    std::ofstream out(path);
    out << text;
  };
  write("date,m1\n2021-01-05,0.5\n2021-01-04,0.2\n");  // decreasing dates
  CHECK_THROWS_AS(score::LossMatrix::read_csv(path), DataError);
  write("date,m1,m2\n2021-01-04,0.5\n");  // ragged row
  CHECK_THROWS_AS(score::LossMatrix::read_csv(path), DataError);
  write("date,m1\n2021-01-04,abc\n");  // non-numeric loss
  CHECK_THROWS_AS(score::LossMatrix::read_csv(path), DataError);
  write("when,m1\n2021-01-04,0.5\n");  // wrong header
  CHECK_THROWS_AS(score::LossMatrix::read_csv(path), DataError);
  write("date\n2021-01-04\n");  // no models
  CHECK_THROWS_AS(score::LossMatrix::read_csv(path), DataError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(score::LossMatrix::read_csv("definitely_missing_file.csv"), DataError);
}

}  // TEST_SUITE("scoring")
