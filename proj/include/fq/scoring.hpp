#pragma once

#include <string>
#include <vector>

#include "fq/common.hpp"

namespace fq::score {

// Emphasis profile for quantile-weighted CRPS.
enum class CrpsWeight { uniform, centre, left_tail, right_tail, tails };

double crps_weight(CrpsWeight w, double alpha);

// Quantile-decomposition CRPS with level weighting, computed by midpoint
// quadrature over the unit interval.  Levels are clamped to the range the
// sample can resolve ([1/2S, 1-1/2S]) and quantiles interpolate linearly
// between order statistics.  Multivariate forecasts score as the mean of
// the per-margin values.
double wcrps(const Matrix& samples, const Vector& y, CrpsWeight weight, std::size_t grid = 1000);

// Sample energy score, E||X-y|| - E||X-X'||/2, in the negative orientation
// (smaller is better).  The cross term is the full pair sum up to 2000
// samples and a fixed systematic offset design above that.
double energy_score(const Matrix& samples, const Vector& y);

// Variogram score with unit weights over all ordered component pairs.
double variogram_score(const Matrix& samples, const Vector& y, double p);

struct ScoringRule {
  enum class Kind { wcrps, energy, variogram };
  Kind kind = Kind::energy;
  CrpsWeight weight = CrpsWeight::uniform;  // wcrps only
  double p = 1.0;                           // variogram only

  std::string id() const;
  static ScoringRule parse(const std::string& id);

  // The nine canonical rules: five wcrps profiles, the energy score, and
  // the variogram score at p = 0.5, 1, 2.
  static std::vector<ScoringRule> standard_set();
};

double apply_rule(const ScoringRule& rule, const Matrix& samples, const Vector& y);

// Per-day losses for a set of models under one scoring rule.
struct LossMatrix {
  std::vector<std::string> models;  // column labels
  std::vector<std::string> dates;   // ISO-8601 row labels, strictly increasing
  Matrix losses;                    // dates x models

  void validate() const;
  Eigen::Index model_index(const std::string& name) const;  // -1 when absent

  void write_csv(const std::string& path) const;
  static LossMatrix read_csv(const std::string& path);
};

}  // namespace fq::score
