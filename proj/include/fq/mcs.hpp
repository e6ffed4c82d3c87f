#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fq/common.hpp"
#include "fq/scoring.hpp"

namespace fq::mcs {

struct Options {
  std::size_t bootstrap = 1000;   // resample count
  std::size_t block_length = 0;   // 0 selects automatically from the data
  std::uint64_t seed = 0;         // bootstrap index stream
};

struct ModelResult {
  std::string model;
  double p_value = 0.0;          // running-maximum elimination p-value
  std::size_t eliminated_at = 0;  // 1-based elimination step; survivors get the final step
};

struct Result {
  std::vector<ModelResult> models;  // in loss-matrix column order
  std::size_t block_length = 1;

  double p_value(const std::string& model) const;
  // Models whose p-value is at least alpha, i.e. the confidence set at
  // level 1 - alpha, in column order.
  std::vector<std::string> survivors_at(double alpha) const;
};

// Sequential elimination over the range statistic max |mean diff| / se,
// with a circular block bootstrap (shared resample indices across pairs)
// supplying both the standard errors and the null distribution.
Result run_mcs(const score::LossMatrix& losses, const Options& options = {});

// Number of consecutive significant autoregressive parameters of the
// loss-difference series: fit orders p = 1..T^(1/3) by least squares and
// stop at the first whose final coefficient fails a 5% two-sided normal
// test; at least 1.
std::size_t auto_block_length(const Vector& differential);

// Max of the single-series rule over all pairwise loss differences.
std::size_t auto_block_length(const score::LossMatrix& losses);

// Fraction of runs in which each model appears in the alpha-level set.
std::map<std::string, double> inclusion_rates(const std::vector<Result>& runs, double alpha);

}  // namespace fq::mcs
