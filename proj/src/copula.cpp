#include "fq/copula.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "fq/stats.hpp"

namespace fq::cop {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Lower factor A with A A' = m for a PSD matrix, tolerating singularity.
Matrix psd_factor(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success) throw FitError("psd_factor: eigendecomposition failed");
  Vector lam = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * lam.cwiseSqrt().asDiagonal();
}

// Positive stable draw with Laplace transform exp(-s^alpha), 0 < alpha < 1
// (Chambers-Mallows-Stuck).
double positive_stable(double alpha, Rng& rng) {
  double theta = kPi * rng.uniform();
  double w = rng.exponential();
  double a = std::sin(alpha * theta) / std::pow(std::sin(theta), 1.0 / alpha);
  double b = std::pow(std::sin((1.0 - alpha) * theta) / w, (1.0 - alpha) / alpha);
  return a * b;
}

double gumbel_log_density(double u, double v, double th) {
  double lu = -std::log(u), lv = -std::log(v);
  double w = std::pow(lu, th) + std::pow(lv, th);
  double logc = -std::pow(w, 1.0 / th);
  return logc + (th - 1.0) * (std::log(lu) + std::log(lv)) - std::log(u * v) +
         (2.0 / th - 2.0) * std::log(w) + std::log1p((th - 1.0) * std::pow(w, -1.0 / th));
}

double clayton_log_density(double u, double v, double th) {
  double s = std::pow(u, -th) + std::pow(v, -th) - 1.0;
  return std::log1p(th) - (1.0 + th) * std::log(u * v) - (2.0 * th + 1.0) / th * std::log(s);
}

}  // namespace

Family family_from_string(const std::string& name) {
  if (name == "gaussian") return Family::gaussian;
  if (name == "gumbel") return Family::gumbel;
  if (name == "clayton") return Family::clayton;
  throw ConfigError("unknown copula family '" + name + "'");
}

std::string to_string(Family family) {
  switch (family) {
    case Family::gaussian: return "gaussian";
    case Family::gumbel: return "gumbel";
    case Family::clayton: return "clayton";
  }
  return "?";
}

std::size_t CopulaSpec::dim() const {
  return family == Family::gaussian ? static_cast<std::size_t>(correlation.rows()) : archimedean_dim;
}

CopulaSpec CopulaSpec::gaussian(Matrix correlation) {
  if (correlation.rows() != correlation.cols() || correlation.rows() < 1)
    throw ConfigError("gaussian copula needs a square correlation matrix");
  CopulaSpec s;
  s.family = Family::gaussian;
  s.correlation = std::move(correlation);
  return s;
}

CopulaSpec CopulaSpec::gumbel(double theta, std::size_t dim) {
  if (!(theta >= 1.0)) throw ConfigError("gumbel copula needs theta >= 1");
  if (dim < 2) throw ConfigError("archimedean copula needs dimension >= 2");
  CopulaSpec s;
  s.family = Family::gumbel;
  s.theta = theta;
  s.archimedean_dim = dim;
  return s;
}

CopulaSpec CopulaSpec::clayton(double theta, std::size_t dim) {
  if (!(theta > 0.0)) throw ConfigError("clayton copula needs theta > 0");
  if (dim < 2) throw ConfigError("archimedean copula needs dimension >= 2");
  CopulaSpec s;
  s.family = Family::clayton;
  s.theta = theta;
  s.archimedean_dim = dim;
  return s;
}

Matrix nearest_correlation(Matrix m) {
  if (m.rows() != m.cols()) throw Error("nearest_correlation: matrix must be square");
  m = 0.5 * (m + m.transpose().eval());
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success) throw FitError("nearest_correlation: eigendecomposition failed");
  Vector lam = es.eigenvalues().cwiseMax(1e-10);
  Matrix r = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
  Vector d = r.diagonal().cwiseSqrt();
  for (Eigen::Index i = 0; i < r.rows(); ++i)
    for (Eigen::Index j = 0; j < r.cols(); ++j) r(i, j) /= d(i) * d(j);
  return r;
}

CopulaSpec fit_gaussian_copula(const Matrix& data) {
  if (data.rows() < 3) throw DataError("fit_gaussian_copula: need at least three rows");
  if (data.cols() < 1) throw DataError("fit_gaussian_copula: need at least one column");
  const double tp1 = static_cast<double>(data.rows() + 1);
  Matrix scores(data.rows(), data.cols());
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    auto ranks = stats::midranks(data.col(j));
    for (Eigen::Index i = 0; i < data.rows(); ++i)
      scores(i, j) = stats::normal_inv_cdf(ranks[static_cast<std::size_t>(i)] / tp1);
  }
  return CopulaSpec::gaussian(nearest_correlation(stats::correlation(scores)));
}

Matrix sample_copula(const CopulaSpec& spec, std::size_t s, Rng& rng) {
  if (s == 0) throw ConfigError("sample_copula: need at least one draw");
  const auto n = static_cast<Eigen::Index>(spec.dim());
  Matrix u(static_cast<Eigen::Index>(s), n);
  switch (spec.family) {
    case Family::gaussian: {
      Matrix a = psd_factor(spec.correlation);
      Vector z(n);
      for (std::size_t row = 0; row < s; ++row) {
        for (Eigen::Index j = 0; j < n; ++j) z(j) = rng.normal();
        Vector w = a * z;
        for (Eigen::Index j = 0; j < n; ++j)
          u(static_cast<Eigen::Index>(row), j) = stats::normal_cdf(w(j));
      }
      break;
    }
    case Family::gumbel: {
      const double th = spec.theta;
      for (std::size_t row = 0; row < s; ++row) {
        if (th < 1.0 + 1e-12) {
          for (Eigen::Index j = 0; j < n; ++j) u(static_cast<Eigen::Index>(row), j) = rng.uniform();
        } else {
          double v = positive_stable(1.0 / th, rng);
          for (Eigen::Index j = 0; j < n; ++j) {
            double e = rng.exponential();
            u(static_cast<Eigen::Index>(row), j) = std::exp(-std::pow(e / v, 1.0 / th));
          }
        }
      }
      break;
    }
    case Family::clayton: {
      const double th = spec.theta;
      for (std::size_t row = 0; row < s; ++row) {
        double v = rng.gamma(1.0 / th);
        for (Eigen::Index j = 0; j < n; ++j) {
          double e = rng.exponential();
          u(static_cast<Eigen::Index>(row), j) = std::pow(1.0 + e / v, -1.0 / th);
        }
      }
      break;
    }
  }
  // Keep draws strictly inside (0,1) for downstream quantile transforms.
  u = u.array().min(1.0 - 1e-16).max(1e-16);
  return u;
}

double kendall_tau(Family family, double theta) {
  switch (family) {
    case Family::gumbel:
      if (!(theta >= 1.0)) throw ConfigError("kendall_tau: gumbel needs theta >= 1");
      return 1.0 - 1.0 / theta;
    case Family::clayton:
      if (!(theta > 0.0)) throw ConfigError("kendall_tau: clayton needs theta > 0");
      return theta / (theta + 2.0);
    case Family::gaussian:
      if (!(theta >= -1.0 && theta <= 1.0)) throw ConfigError("kendall_tau: correlation outside [-1,1]");
      return 2.0 * std::asin(theta) / kPi;
  }
  throw ConfigError("kendall_tau: unknown family");
}

namespace {

// Counts inversions by merge sort.
std::uint64_t count_inversions(std::vector<double>& a, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t inv = count_inversions(a, buf, lo, mid) + count_inversions(a, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (a[j] < a[i]) {
      inv += mid - i;
      buf[k++] = a[j++];
    } else {
      buf[k++] = a[i++];
    }
  }
  while (i < mid) buf[k++] = a[i++];
  while (j < hi) buf[k++] = a[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            a.begin() + static_cast<std::ptrdiff_t>(lo));
  return inv;
}

}  // namespace

double sample_kendall_tau(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw DataError("sample_kendall_tau: length mismatch");
  const auto n = static_cast<std::size_t>(x.size());
  if (n < 2) throw DataError("sample_kendall_tau: need at least two pairs");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
    return x(ia) < x(ib) || (x(ia) == x(ib) && y(ia) < y(ib));
  });
  std::vector<double> ys(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y(static_cast<Eigen::Index>(idx[i]));
  double inv = static_cast<double>(count_inversions(ys, buf, 0, n));
  double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  return 1.0 - 2.0 * inv / pairs;
}

void JointForecast::write_samples_csv(const std::string& path, const std::vector<std::string>& names) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
  out << '\n';
  out.precision(17);
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    for (Eigen::Index j = 0; j < samples.cols(); ++j) out << (j ? "," : "") << samples(i, j);
    out << '\n';
  }
}

JointForecast compose(std::vector<dist::MarginalDistribution> marginals, const CopulaSpec& spec, std::size_t s,
                      Rng& rng) {
  if (marginals.empty()) throw DataError("compose: no marginals");
  if (marginals.size() != spec.dim())
    throw DataError("compose: marginal count " + std::to_string(marginals.size()) +
                    " does not match copula dimension " + std::to_string(spec.dim()));
  JointForecast f;
  f.copula = spec;
  f.samples = sample_copula(spec, s, rng);
  for (Eigen::Index j = 0; j < f.samples.cols(); ++j)
    for (Eigen::Index i = 0; i < f.samples.rows(); ++i)
      f.samples(i, j) = marginals[static_cast<std::size_t>(j)].inverse_cdf(f.samples(i, j));
  f.marginals = std::move(marginals);
  return f;
}

ArchimedeanFit fit_archimedean_grid(const Matrix& u, Family family, double theta_lo, double theta_hi,
                                    std::size_t grid_points) {
  if (u.cols() != 2) throw DataError("fit_archimedean_grid: bivariate pseudo-observations required");
  if (u.rows() < 2) throw DataError("fit_archimedean_grid: need at least two rows");
  if (family == Family::gaussian) throw ConfigError("fit_archimedean_grid: use fit_gaussian_copula instead");
  if (!(theta_hi > theta_lo) || grid_points < 2) throw ConfigError("fit_archimedean_grid: bad grid");
  ArchimedeanFit best;
  best.loglik = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < grid_points; ++k) {
    double th = theta_lo + (theta_hi - theta_lo) * static_cast<double>(k) / static_cast<double>(grid_points - 1);
    if (family == Family::gumbel && th < 1.0) continue;
    if (family == Family::clayton && th <= 0.0) continue;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      double a = std::clamp(u(i, 0), 1e-12, 1.0 - 1e-12);
      double b = std::clamp(u(i, 1), 1e-12, 1.0 - 1e-12);
      ll += family == Family::gumbel ? gumbel_log_density(a, b, th) : clayton_log_density(a, b, th);
    }
    if (ll > best.loglik) {
      best.loglik = ll;
      best.theta = th;
    }
  }
  if (!std::isfinite(best.loglik)) throw FitError("fit_archimedean_grid: no admissible grid point");
  return best;
}

}  // namespace fq::cop
