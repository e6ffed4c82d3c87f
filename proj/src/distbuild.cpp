#include "fq/distbuild.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fq/stats.hpp"

namespace fq::dist {

namespace {

constexpr double kTailMass = 1e-6;  // truncation probability on each side

// Monotone cubic Hermite interpolant (Fritsch-Carlson slopes).
struct PchipCurve {
  std::vector<double> t, v, d;

  PchipCurve(std::vector<double> taus, std::vector<double> values) : t(std::move(taus)), v(std::move(values)) {
    const std::size_t n = t.size();
    d.assign(n, 0.0);
    if (n == 2) {
      d[0] = d[1] = (v[1] - v[0]) / (t[1] - t[0]);
      return;
    }
    std::vector<double> h(n - 1), delta(n - 1);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      h[k] = t[k + 1] - t[k];
      delta[k] = (v[k + 1] - v[k]) / h[k];
    }
    for (std::size_t k = 1; k + 1 < n; ++k) {
      if (delta[k - 1] == 0.0 || delta[k] == 0.0 || (delta[k - 1] > 0.0) != (delta[k] > 0.0)) {
        d[k] = 0.0;
      } else {
        double w1 = 2.0 * h[k] + h[k - 1];
        double w2 = h[k] + 2.0 * h[k - 1];
        d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
      }
    }
    d[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  }

  // One-sided three-point end slope, limited to keep the curve monotone.
  static double edge_slope(double h0, double h1, double del0, double del1) {
    double s = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if (s * del0 <= 0.0) return 0.0;
    if ((del0 > 0.0) != (del1 > 0.0) && std::fabs(s) > 3.0 * std::fabs(del0)) return 3.0 * del0;
    return s;
  }

  std::size_t segment(double u) const {
    auto it = std::upper_bound(t.begin(), t.end(), u);
    std::size_t k = static_cast<std::size_t>(it - t.begin());
    if (k == 0) return 0;
    if (k >= t.size()) return t.size() - 2;
    return k - 1;
  }

  double eval(double u) const {
    std::size_t k = segment(u);
    double h = t[k + 1] - t[k];
    double s = (u - t[k]) / h;
    double s2 = s * s, s3 = s2 * s;
    return v[k] * (2.0 * s3 - 3.0 * s2 + 1.0) + h * d[k] * (s3 - 2.0 * s2 + s) + v[k + 1] * (-2.0 * s3 + 3.0 * s2) +
           h * d[k + 1] * (s3 - s2);
  }

  double deriv(double u) const {
    std::size_t k = segment(u);
    double h = t[k + 1] - t[k];
    double s = (u - t[k]) / h;
    return (v[k] * (6.0 * s * s - 6.0 * s) + h * d[k] * (3.0 * s * s - 4.0 * s + 1.0) +
            v[k + 1] * (6.0 * s - 6.0 * s * s) + h * d[k + 1] * (3.0 * s * s - 2.0 * s)) /
           h;
  }
};

void check_nodes(const std::vector<double>& taus, const Vector& values) {
  if (taus.size() < 2) throw ConfigError("build_marginal: need at least two nodes");
  if (static_cast<std::size_t>(values.size()) != taus.size())
    throw ConfigError("build_marginal: taus and values differ in length");
  for (std::size_t k = 0; k < taus.size(); ++k) {
    if (!(taus[k] > 0.0 && taus[k] < 1.0)) throw ConfigError("build_marginal: tau outside (0,1)");
    if (k > 0 && taus[k] <= taus[k - 1]) throw ConfigError("build_marginal: taus must be strictly increasing");
    if (!std::isfinite(values(static_cast<Eigen::Index>(k)))) throw DataError("build_marginal: non-finite node value");
    if (k > 0 && values(static_cast<Eigen::Index>(k)) < values(static_cast<Eigen::Index>(k - 1)))
      throw DataError("build_marginal: node values decrease; apply rearrange first");
  }
}

}  // namespace

class MarginalDistribution::Impl {
 public:
  virtual ~Impl() = default;
  virtual double cdf(double x) const = 0;
  virtual double inverse_cdf(double u) const = 0;  // u already clamped to the valid range
  virtual double pdf(double x) const = 0;
  virtual std::pair<double, double> support() const = 0;
  virtual std::shared_ptr<const Impl> shifted(double delta) const = 0;
  virtual std::string method() const = 0;
  virtual nlohmann::json to_json() const = 0;
};

namespace {

// Upper-root bisection: the largest u with q(u) <= x, for a nondecreasing
// quantile function q on [lo_u, hi_u].
template <typename F>
double invert_monotone(const F& q, double x, double lo_u, double hi_u) {
  double lo = lo_u, hi = hi_u;
  if (q(lo) > x) return lo;
  if (q(hi) <= x) return hi;
  for (int it = 0; it < 100 && hi - lo > 1e-12; ++it) {
    double mid = 0.5 * (lo + hi);
    if (q(mid) <= x)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

class PchipImpl : public MarginalDistribution::Impl {
 public:
  PchipImpl(std::vector<double> taus, std::vector<double> values) : curve_(std::move(taus), std::move(values)) {
    lo_u_ = kTailMass;
    hi_u_ = 1.0 - kTailMass;
    lower_ = quantile(lo_u_);
    upper_ = quantile(hi_u_);
  }

  double quantile(double u) const {
    const auto& t = curve_.t;
    const auto& v = curve_.v;
    if (u <= t.front()) return v.front() + curve_.d.front() * (u - t.front());
    if (u >= t.back()) return v.back() + curve_.d.back() * (u - t.back());
    return curve_.eval(u);
  }

  double quantile_deriv(double u) const {
    if (u <= curve_.t.front()) return curve_.d.front();
    if (u >= curve_.t.back()) return curve_.d.back();
    return curve_.deriv(u);
  }

  double cdf(double x) const override {
    if (x < lower_) return 0.0;
    if (x >= upper_) return 1.0;
    return invert_monotone([&](double u) { return quantile(u); }, x, lo_u_, hi_u_);
  }

  double inverse_cdf(double u) const override { return quantile(std::clamp(u, lo_u_, hi_u_)); }

  double pdf(double x) const override {
    if (x < lower_ || x > upper_) return 0.0;
    double u = invert_monotone([&](double q) { return quantile(q); }, x, lo_u_, hi_u_);
    double slope = quantile_deriv(u);
    if (slope <= 0.0) return std::numeric_limits<double>::infinity();
    return 1.0 / slope;
  }

  std::pair<double, double> support() const override { return {lower_, upper_}; }

  std::shared_ptr<const Impl> shifted(double delta) const override {
    std::vector<double> v = curve_.v;
    for (auto& x : v) x += delta;
    return std::make_shared<PchipImpl>(curve_.t, std::move(v));
  }

  std::string method() const override { return "pchip"; }

  nlohmann::json to_json() const override {
    return {{"method", "pchip"}, {"taus", curve_.t}, {"values", curve_.v}};
  }

 private:
  PchipCurve curve_;
  double lo_u_, hi_u_, lower_, upper_;
};

class StepImpl : public MarginalDistribution::Impl {
 public:
  StepImpl(std::vector<double> taus, std::vector<double> values) : t_(std::move(taus)), v_(std::move(values)) {}

  double cdf(double x) const override {
    if (x < v_.front()) return 0.0;
    if (x >= v_.back()) return 1.0;
    // largest k with v[k] <= x; mass below the next node is t[k+1]
    auto it = std::upper_bound(v_.begin(), v_.end(), x);
    std::size_t k = static_cast<std::size_t>(it - v_.begin());  // first index with v > x
    return t_[k];
  }

  double inverse_cdf(double u) const override {
    // right-continuous: value of the nearest node at or below u
    auto it = std::upper_bound(t_.begin(), t_.end(), u);
    std::size_t k = static_cast<std::size_t>(it - t_.begin());
    return k == 0 ? v_.front() : v_[k - 1];
  }

  double pdf(double) const override { return 0.0; }  // purely atomic

  std::pair<double, double> support() const override { return {v_.front(), v_.back()}; }

  std::shared_ptr<const Impl> shifted(double delta) const override {
    std::vector<double> v = v_;
    for (auto& x : v) x += delta;
    return std::make_shared<StepImpl>(t_, std::move(v));
  }

  std::string method() const override { return "step"; }

  nlohmann::json to_json() const override { return {{"method", "step"}, {"taus", t_}, {"values", v_}}; }

 private:
  std::vector<double> t_, v_;
};

class KernelImpl : public MarginalDistribution::Impl {
 public:
  KernelImpl(std::vector<double> values, double bandwidth) : v_(std::move(values)), h_(bandwidth) {
    lower_ = v_.front() - h_;
    upper_ = v_.back() + h_;
  }

  static double rule_of_thumb_bandwidth(const std::vector<double>& sorted) {
    Vector x = Eigen::Map<const Vector>(sorted.data(), static_cast<Eigen::Index>(sorted.size()));
    double s = stats::sd(x);
    double iqr = stats::quantile_linear_sorted(sorted, 0.75) - stats::quantile_linear_sorted(sorted, 0.25);
    double a = s;
    if (iqr > 0.0) a = std::min(a, iqr / 1.34);
    if (a <= 0.0) a = std::max(s, 1e-8 * (1.0 + std::fabs(sorted.front())));
    // Epanechnikov analogue of the Gaussian reference rule: (40*sqrt(pi))^(1/5).
    return 2.345 * a * std::pow(static_cast<double>(sorted.size()), -0.2);
  }

  double pdf(double x) const override {
    double s = 0.0;
    for (double c : v_) {
      double z = (x - c) / h_;
      if (std::fabs(z) < 1.0) s += 0.75 * (1.0 - z * z);
    }
    return s / (h_ * static_cast<double>(v_.size()));
  }

  double cdf(double x) const override {
    if (x <= lower_) return 0.0;
    if (x >= upper_) return 1.0;
    double s = 0.0;
    for (double c : v_) {
      double z = (x - c) / h_;
      if (z <= -1.0)
        continue;
      else if (z >= 1.0)
        s += 1.0;
      else
        s += 0.5 + 0.75 * (z - z * z * z / 3.0);
    }
    return s / static_cast<double>(v_.size());
  }

  double inverse_cdf(double u) const override {
    return invert_monotone([&](double q) { return cdf(q); }, u, lower_, upper_);
  }

  std::pair<double, double> support() const override { return {lower_, upper_}; }

  std::shared_ptr<const Impl> shifted(double delta) const override {
    std::vector<double> v = v_;
    for (auto& x : v) x += delta;
    return std::make_shared<KernelImpl>(std::move(v), h_);
  }

  std::string method() const override { return "kernel"; }

  nlohmann::json to_json() const override { return {{"method", "kernel"}, {"values", v_}, {"bandwidth", h_}}; }

 private:
  std::vector<double> v_;
  double h_, lower_, upper_;
};

class EcdfImpl : public MarginalDistribution::Impl {
 public:
  explicit EcdfImpl(std::vector<double> sorted) : x_(std::move(sorted)) {}

  double cdf(double x) const override {
    auto it = std::upper_bound(x_.begin(), x_.end(), x);
    return static_cast<double>(it - x_.begin()) / static_cast<double>(x_.size());
  }

  double inverse_cdf(double u) const override {
    double np = static_cast<double>(x_.size()) * u;
    auto k = static_cast<std::size_t>(std::ceil(np - 1e-12));
    if (k < 1) k = 1;
    if (k > x_.size()) k = x_.size();
    return x_[k - 1];
  }

  double pdf(double) const override { return 0.0; }  // purely atomic

  std::pair<double, double> support() const override { return {x_.front(), x_.back()}; }

  std::shared_ptr<const Impl> shifted(double delta) const override {
    std::vector<double> x = x_;
    for (auto& v : x) v += delta;
    return std::make_shared<EcdfImpl>(std::move(x));
  }

  std::string method() const override { return "ecdf"; }

  nlohmann::json to_json() const override {
    // Compact quantile summary; the raw sample can be very large.
    std::vector<double> taus, values;
    const int grid = 201;
    for (int i = 1; i < grid; ++i) {
      double u = static_cast<double>(i) / grid;
      taus.push_back(u);
      values.push_back(inverse_cdf(u));
    }
    return {{"method", "ecdf"}, {"n", x_.size()}, {"taus", taus}, {"values", values}};
  }

 private:
  std::vector<double> x_;
};

}  // namespace

double MarginalDistribution::cdf(double x) const {
  if (!impl_) throw Error("marginal distribution is empty");
  return impl_->cdf(x);
}

double MarginalDistribution::inverse_cdf(double u) const {
  if (!impl_) throw Error("marginal distribution is empty");
  if (!(u >= 0.0 && u <= 1.0)) throw Error("inverse_cdf: u outside [0,1]");
  return impl_->inverse_cdf(u);
}

double MarginalDistribution::pdf(double x) const {
  if (!impl_) throw Error("marginal distribution is empty");
  return impl_->pdf(x);
}

std::pair<double, double> MarginalDistribution::support() const {
  if (!impl_) throw Error("marginal distribution is empty");
  return impl_->support();
}

Vector MarginalDistribution::sample(std::size_t n, Rng& rng) const {
  if (!impl_) throw Error("marginal distribution is empty");
  Vector out(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) out(static_cast<Eigen::Index>(i)) = impl_->inverse_cdf(rng.uniform());
  return out;
}

MarginalDistribution MarginalDistribution::shift(double delta) const {
  if (!impl_) throw Error("marginal distribution is empty");
  return MarginalDistribution(impl_->shifted(delta));
}

std::string MarginalDistribution::method() const {
  if (!impl_) throw Error("marginal distribution is empty");
  return impl_->method();
}

nlohmann::json MarginalDistribution::to_json() const {
  if (!impl_) throw Error("marginal distribution is empty");
  return impl_->to_json();
}

BuildMethod build_method_from_string(const std::string& name) {
  if (name == "pchip") return BuildMethod::pchip;
  if (name == "step") return BuildMethod::step;
  if (name == "kernel") return BuildMethod::kernel;
  throw ConfigError("unknown build method '" + name + "'");
}

std::string to_string(BuildMethod method) {
  switch (method) {
    case BuildMethod::pchip: return "pchip";
    case BuildMethod::step: return "step";
    case BuildMethod::kernel: return "kernel";
  }
  return "?";
}

MarginalDistribution build_marginal(const std::vector<double>& taus, const Vector& values, BuildMethod method) {
  check_nodes(taus, values);
  std::vector<double> v(values.data(), values.data() + values.size());
  switch (method) {
    case BuildMethod::pchip: return MarginalDistribution(std::make_shared<PchipImpl>(taus, std::move(v)));
    case BuildMethod::step: return MarginalDistribution(std::make_shared<StepImpl>(taus, std::move(v)));
    case BuildMethod::kernel: {
      double h = KernelImpl::rule_of_thumb_bandwidth(v);
      return MarginalDistribution(std::make_shared<KernelImpl>(std::move(v), h));
    }
  }
  throw ConfigError("build_marginal: unknown method");
}

MarginalDistribution ecdf_marginal(const Vector& sample) {
  if (sample.size() == 0) throw DataError("ecdf_marginal: empty sample");
  std::vector<double> x(sample.data(), sample.data() + sample.size());
  for (double v : x)
    if (!std::isfinite(v)) throw DataError("ecdf_marginal: non-finite sample value");
  std::sort(x.begin(), x.end());
  return MarginalDistribution(std::make_shared<EcdfImpl>(std::move(x)));
}

KsResult ks_two_sample(const Vector& a, const Vector& b) {
  if (a.size() == 0 || b.size() == 0) throw DataError("ks_two_sample: empty sample");
  std::vector<double> xa(a.data(), a.data() + a.size()), xb(b.data(), b.data() + b.size());
  std::sort(xa.begin(), xa.end());
  std::sort(xb.begin(), xb.end());
  const double na = static_cast<double>(xa.size()), nb = static_cast<double>(xb.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < xa.size() && j < xb.size()) {
    double x = std::min(xa[i], xb[j]);
    while (i < xa.size() && xa[i] <= x) ++i;
    while (j < xb.size() && xb[j] <= x) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  double ne = na * nb / (na + nb);
  KsResult r;
  r.statistic = d;
  r.p_value = stats::kolmogorov_survival(std::sqrt(ne) * d);
  return r;
}

KsResult ks_uniform(const Vector& u) {
  if (u.size() == 0) throw DataError("ks_uniform: empty sample");
  std::vector<double> x(u.data(), u.data() + u.size());
  for (double v : x)
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("ks_uniform: value outside [0,1]");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    double hi = static_cast<double>(k + 1) / n - x[k];
    double lo = x[k] - static_cast<double>(k) / n;
    d = std::max({d, hi, lo});
  }
  KsResult r;
  r.statistic = d;
  r.p_value = stats::kolmogorov_survival(std::sqrt(n) * d);
  return r;
}

double cdf_distance(const MarginalDistribution& a, const MarginalDistribution& b, std::size_t points) {
  auto [alo, ahi] = a.support();
  auto [blo, bhi] = b.support();
  double lo = std::min(alo, blo), hi = std::max(ahi, bhi);
  double d = 0.0;
  for (std::size_t k = 0; k < points; ++k) {
    double x = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1);
    d = std::max(d, std::fabs(a.cdf(x) - b.cdf(x)));
  }
  return d;
}

}  // namespace fq::dist
