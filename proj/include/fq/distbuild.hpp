#pragma once

#include <json.hpp>

#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fq/common.hpp"
#include "fq/rng.hpp"

namespace fq::dist {

enum class BuildMethod { pchip, step, kernel };

BuildMethod build_method_from_string(const std::string& name);
std::string to_string(BuildMethod method);

// A univariate forecast distribution with finite support.  Immutable and
// cheap to copy; safe to share across threads.
class MarginalDistribution {
 public:
  class Impl;

  MarginalDistribution() = default;
  explicit MarginalDistribution(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

  bool valid() const { return impl_ != nullptr; }

  double cdf(double x) const;
  // Quantile function; u is clamped to the truncated tail range.  Throws for
  // u outside [0, 1].
  double inverse_cdf(double u) const;
  double pdf(double x) const;
  // Probability integral transform: cdf clamped to 0 below and 1 above the
  // support.
  double pit(double y) const { return cdf(y); }
  std::pair<double, double> support() const;
  // n draws by inverse transform of a uniform stream.
  Vector sample(std::size_t n, Rng& rng) const;
  // The same distribution translated by delta.
  MarginalDistribution shift(double delta) const;
  std::string method() const;
  nlohmann::json to_json() const;

 private:
  std::shared_ptr<const Impl> impl_;
};

// Builds a marginal from quantile nodes (taus[k], values[k]).  Values must
// be nondecreasing (apply the monotone rearrangement first).
//
//   pchip  - monotone cubic interpolation of the quantile function, with
//            linear tail extension of the outermost segment slope truncated
//            at probability 1e-6 on each side;
//   step   - piecewise-constant quantile function, right-continuous (each u
//            maps to the value of the nearest node at or below it);
//   kernel - equal-weight Epanechnikov mixture centred on the node values
//            with a rule-of-thumb bandwidth.
MarginalDistribution build_marginal(const std::vector<double>& taus, const Vector& values, BuildMethod method);

// Empirical distribution of a sample: right-continuous ECDF, quantiles by
// order statistics under the lower-value tie convention.
MarginalDistribution ecdf_marginal(const Vector& sample);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value at
// effective size n_a*n_b/(n_a+n_b).
KsResult ks_two_sample(const Vector& a, const Vector& b);

// One-sample KS test against the uniform distribution on (0, 1).
KsResult ks_uniform(const Vector& u);

// Largest absolute CDF difference between two distributions on a grid of
// `points` evaluation abscissae spanning both supports.
double cdf_distance(const MarginalDistribution& a, const MarginalDistribution& b, std::size_t points = 2001);

}  // namespace fq::dist
