#include "fq/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fq::stats {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Acklam's rational approximation for the normal quantile.
double norm_inv_guess(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,  -2.759285104469687e+02,
                             1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01, -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  const double plow = 0.02425;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double q = p - 0.5;
  double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

// Continued fraction for the incomplete beta function (Lentz's method).
double inc_beta_cf(double a, double b, double x) {
  const double tiny = 1e-300;
  const double eps = 1e-15;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

}  // namespace

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_inv_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error("normal_inv_cdf: p must lie in (0,1)");
  // Reflect into the lower tail: 1-p is exact for p >= 0.5, and the erfc
  // form of the cdf keeps full relative precision there.
  if (p > 0.5) return -normal_inv_cdf(1.0 - p);
  double x = norm_inv_guess(p);
  // Two Halley refinements against the exact cdf.
  for (int it = 0; it < 2; ++it) {
    double e = normal_cdf(x) - p;
    double u = e * std::sqrt(2.0 * kPi) * std::exp(0.5 * x * x);
    x = x - u / (1.0 + 0.5 * x * u);
  }
  return x;
}

double inc_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw Error("inc_beta: a, b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * inc_beta_cf(a, b, x) / a;
  return 1.0 - front * inc_beta_cf(b, a, 1.0 - x) / b;
}

double inc_beta_inv(double a, double b, double p) {
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  // Bisection with Newton acceleration; robust over the whole domain.
  double lo = 0.0, hi = 1.0, x = 0.5;
  for (int it = 0; it < 200; ++it) {
    double f = inc_beta(a, b, x) - p;
    if (f > 0.0)
      hi = x;
    else
      lo = x;
    double ln_pdf = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * std::log(x) +
                    (b - 1.0) * std::log1p(-x);
    double step = f / std::exp(ln_pdf);
    double xn = x - step;
    if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
    if (std::fabs(xn - x) < 1e-15 * (1.0 + std::fabs(x))) return xn;
    x = xn;
  }
  return x;
}

double student_t_cdf(double x, double dof) {
  if (dof <= 0.0) throw Error("student_t_cdf: dof must be positive");
  if (x == 0.0) return 0.5;
  double w = dof / (dof + x * x);
  double tail = 0.5 * inc_beta(0.5 * dof, 0.5, w);
  return x > 0.0 ? 1.0 - tail : tail;
}

double student_t_quantile(double p, double dof) {
  if (!(p > 0.0 && p < 1.0)) throw Error("student_t_quantile: p must lie in (0,1)");
  if (p == 0.5) return 0.0;
  bool upper = p > 0.5;
  double tail = upper ? 1.0 - p : p;
  double w = inc_beta_inv(0.5 * dof, 0.5, 2.0 * tail);
  double x = std::sqrt(dof * (1.0 - w) / std::max(w, 1e-300));
  return upper ? x : -x;
}

double student_t_log_pdf(double x, double dof) {
  return std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) - 0.5 * std::log(kPi * dof) -
         0.5 * (dof + 1.0) * std::log1p(x * x / dof);
}

double std_t_quantile(double p, double dof) {
  if (dof <= 2.0) throw Error("std_t_quantile: dof must exceed 2");
  return student_t_quantile(p, dof) * std::sqrt((dof - 2.0) / dof);
}

double std_t_log_pdf(double z, double dof) {
  if (dof <= 2.0) throw Error("std_t_log_pdf: dof must exceed 2");
  return std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) - 0.5 * std::log(kPi * (dof - 2.0)) -
         0.5 * (dof + 1.0) * std::log1p(z * z / (dof - 2.0));
}

double std_t_mean_abs(double dof) {
  if (dof <= 2.0) throw Error("std_t_mean_abs: dof must exceed 2");
  return 2.0 * std::sqrt(dof - 2.0) * std::exp(std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof)) /
         (std::sqrt(kPi) * (dof - 1.0));
}

double kolmogorov_survival(double lambda) {
  if (lambda < 1e-8) return 1.0;
  double sum = 0.0;
  for (int j = 1; j <= 100; ++j) {
    double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += (j % 2 == 1 ? term : -term);
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

double mean(const Vector& x) { return x.size() == 0 ? 0.0 : x.mean(); }

double variance(const Vector& x) {
  if (x.size() < 2) throw Error("variance: need at least two observations");
  double m = x.mean();
  return (x.array() - m).square().sum() / static_cast<double>(x.size() - 1);
}

double sd(const Vector& x) { return std::sqrt(variance(x)); }

double empirical_quantile_lower_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw Error("empirical_quantile_lower: empty sample");
  if (!(p > 0.0 && p < 1.0)) throw Error("empirical_quantile_lower: p must lie in (0,1)");
  double np = static_cast<double>(sorted.size()) * p;
  auto k = static_cast<std::size_t>(std::ceil(np - 1e-12));
  if (k < 1) k = 1;
  if (k > sorted.size()) k = sorted.size();
  return sorted[k - 1];
}

double empirical_quantile_lower(std::vector<double> x, double p) {
  std::sort(x.begin(), x.end());
  return empirical_quantile_lower_sorted(x, p);
}

double quantile_linear_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw Error("quantile_linear: empty sample");
  if (sorted.size() == 1) return sorted[0];
  double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo >= sorted.size() - 1) return sorted.back();
  double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

double interquartile_range(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  return quantile_linear_sorted(x, 0.75) - quantile_linear_sorted(x, 0.25);
}

Matrix correlation(const Matrix& x) {
  if (x.rows() < 2) throw Error("correlation: need at least two rows");
  Matrix c = x.rowwise() - x.colwise().mean();
  Matrix cov = c.transpose() * c / static_cast<double>(x.rows() - 1);
  Vector s = cov.diagonal().array().sqrt();
  Matrix r = cov;
  for (Eigen::Index i = 0; i < r.rows(); ++i)
    for (Eigen::Index j = 0; j < r.cols(); ++j) {
      double denom = s(i) * s(j);
      r(i, j) = denom > 0.0 ? cov(i, j) / denom : (i == j ? 1.0 : 0.0);
    }
  return r;
}

std::vector<double> midranks(const Vector& x) {
  const auto n = static_cast<std::size_t>(x.size());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x(static_cast<Eigen::Index>(a)) < x(static_cast<Eigen::Index>(b)); });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x(static_cast<Eigen::Index>(idx[j + 1])) == x(static_cast<Eigen::Index>(idx[i]))) ++j;
    double r = 0.5 * static_cast<double>(i + j) + 1.0;  // average of 1-based ranks i+1 .. j+1
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace fq::stats
