#pragma once

#include <cstddef>
#include <vector>

#include "fq/common.hpp"

namespace fq::stats {

// Standard normal density, distribution, and quantile functions.
double normal_pdf(double x);
double normal_cdf(double x);
// Accurate to ~1e-15 via a rational initial guess plus one Halley step.
double normal_inv_cdf(double p);

// Regularized incomplete beta function I_x(a, b) and its inverse in x.
double inc_beta(double a, double b, double x);
double inc_beta_inv(double a, double b, double p);

// Student-t with dof degrees of freedom (classic parameterization).
double student_t_cdf(double x, double dof);
double student_t_quantile(double p, double dof);
double student_t_log_pdf(double x, double dof);

// Unit-variance Student-t (requires dof > 2).
double std_t_quantile(double p, double dof);
double std_t_log_pdf(double z, double dof);
// E|Z| for the unit-variance Student-t.
double std_t_mean_abs(double dof);

// Kolmogorov limiting distribution: P(K > lambda).
double kolmogorov_survival(double lambda);

// Sample moments.
double mean(const Vector& x);
double variance(const Vector& x);  // ddof = 1
double sd(const Vector& x);

// Empirical quantile of a sample under the lower-value tie convention:
// the smallest order statistic x_(k) with k/n >= p.  This is the smallest
// minimizer of the check loss at level p.
double empirical_quantile_lower(std::vector<double> x, double p);
// Same, but the input is already sorted ascending.
double empirical_quantile_lower_sorted(const std::vector<double>& sorted, double p);

// Quantile by linear interpolation of order statistics (the common
// (n-1)p + 1 rule); input sorted ascending.
double quantile_linear_sorted(const std::vector<double>& sorted, double p);

double interquartile_range(std::vector<double> x);

// Pearson correlation matrix of the columns of x.
Matrix correlation(const Matrix& x);

// Midranks (ties averaged), 1-based.
std::vector<double> midranks(const Vector& x);

}  // namespace fq::stats
