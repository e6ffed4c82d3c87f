#include "fq/mcs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/QR>

#include "fq/rng.hpp"
#include "fq/stats.hpp"

namespace fq::mcs {

namespace {

constexpr double kHuge = 1e300;

// Ratio with guarded denominator: identical models compare as 0, a real
// difference with a degenerate standard error dominates everything else.
double guarded_ratio(double diff, double se) {
  if (se > 1e-300) return diff / se;
  return diff == 0.0 ? 0.0 : (diff > 0.0 ? kHuge : -kHuge);
}

Matrix bootstrap_column_means(const Matrix& losses, std::size_t b_count, std::size_t block, Rng& rng) {
  const auto t_obs = static_cast<std::size_t>(losses.rows());
  const auto m = losses.cols();
  Matrix means(static_cast<Eigen::Index>(b_count), m);
  for (std::size_t b = 0; b < b_count; ++b) {
    Vector acc = Vector::Zero(m);
    std::size_t filled = 0;
    while (filled < t_obs) {
      std::size_t start = rng.uniform_index(t_obs);
      for (std::size_t k = 0; k < block && filled < t_obs; ++k, ++filled)
        acc += losses.row(static_cast<Eigen::Index>((start + k) % t_obs)).transpose();
    }
    means.row(static_cast<Eigen::Index>(b)) = acc.transpose() / static_cast<double>(t_obs);
  }
  return means;
}

}  // namespace

double Result::p_value(const std::string& model) const {
  for (const auto& m : models)
    if (m.model == model) return m.p_value;
  throw ConfigError("mcs result: unknown model '" + model + "'");
}

std::vector<std::string> Result::survivors_at(double alpha) const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("mcs survivors: alpha outside (0,1)");
  std::vector<std::string> out;
  for (const auto& m : models)
    if (m.p_value >= alpha) out.push_back(m.model);
  return out;
}

Result run_mcs(const score::LossMatrix& losses, const Options& options) {
  losses.validate();
  const auto m = losses.losses.cols();
  const auto t_obs = losses.losses.rows();
  if (m < 2) throw ConfigError("run_mcs: need at least two models");
  if (t_obs < 50) throw DataError("run_mcs: need at least fifty loss rows");
  if (options.bootstrap < 2) throw ConfigError("run_mcs: need at least two bootstrap resamples");

  std::size_t block = options.block_length;
  if (block == 0) block = auto_block_length(losses);
  if (block > static_cast<std::size_t>(t_obs))
    throw ConfigError("run_mcs: block length exceeds the sample length");

  Result res;
  res.block_length = block;

  // Shared bootstrap index stream: one set of resampled column means serves
  // every pair and every elimination step.
  Rng rng = Rng(options.seed).split("mcs_bootstrap");
  Matrix boot = bootstrap_column_means(losses.losses, options.bootstrap, block, rng);

  Vector col_mean = losses.losses.colwise().mean();
  Matrix centered = boot.rowwise() - col_mean.transpose();  // c*_b - c, per model

  // Pairwise standard errors from the bootstrap dispersion of the mean
  // differences; fixed across elimination steps.
  Matrix se = Matrix::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) {
      Vector d = centered.col(i) - centered.col(j);
      double var = (d.array() - d.mean()).square().sum() / static_cast<double>(d.size() - 1);
      se(i, j) = se(j, i) = std::sqrt(var);
    }

  std::vector<Eigen::Index> active(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) active[static_cast<std::size_t>(i)] = i;

  res.models.resize(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) res.models[static_cast<std::size_t>(i)].model = losses.models[static_cast<std::size_t>(i)];

  double running_p = 0.0;
  std::size_t step = 1;
  while (active.size() > 1) {
    // Observed range statistic and the worst model on the active set.
    double stat = 0.0;
    double worst_score = -std::numeric_limits<double>::infinity();
    std::size_t worst_pos = 0;
    for (std::size_t a = 0; a < active.size(); ++a) {
      double sup_a = -std::numeric_limits<double>::infinity();
      for (std::size_t b = 0; b < active.size(); ++b) {
        if (a == b) continue;
        double r = guarded_ratio(col_mean(active[a]) - col_mean(active[b]), se(active[a], active[b]));
        sup_a = std::max(sup_a, r);
        stat = std::max(stat, std::fabs(r));
      }
      if (sup_a > worst_score) {
        worst_score = sup_a;
        worst_pos = a;
      }
    }

    // Bootstrap null: same statistic on recentred resampled means.
    std::size_t exceed = 0;
    for (Eigen::Index b = 0; b < centered.rows(); ++b) {
      double stat_b = 0.0;
      for (std::size_t a = 0; a < active.size() && stat_b < stat; ++a)
        for (std::size_t c = a + 1; c < active.size(); ++c) {
          double num = centered(b, active[a]) - centered(b, active[c]);
          double r = se(active[a], active[c]) > 1e-300 ? std::fabs(num) / se(active[a], active[c]) : 0.0;
          stat_b = std::max(stat_b, r);
          if (stat_b >= stat) break;
        }
      if (stat_b >= stat) ++exceed;
    }
    double p_step = static_cast<double>(exceed) / static_cast<double>(centered.rows());
    running_p = std::max(running_p, p_step);

    auto& slot = res.models[static_cast<std::size_t>(active[worst_pos])];
    slot.p_value = running_p;
    slot.eliminated_at = step;
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(worst_pos));
    ++step;
  }

  auto& last = res.models[static_cast<std::size_t>(active.front())];
  last.p_value = 1.0;
  last.eliminated_at = step;
  return res;
}

std::size_t auto_block_length(const Vector& differential) {
  const auto t_obs = differential.size();
  if (t_obs < 20) return 1;

  // Grow the autoregression one lag at a time while the newest lag keeps
  // testing significant; the stopping order is the block length.
  const auto max_order = static_cast<Eigen::Index>(std::cbrt(static_cast<double>(t_obs)));
  std::size_t best = 1;
  for (Eigen::Index p = 1; p <= max_order; ++p) {
    const Eigen::Index rows = t_obs - p;
    if (rows <= p + 2) break;
    Matrix x(rows, p + 1);
    x.col(0).setOnes();
    for (Eigen::Index k = 1; k <= p; ++k) x.col(k) = differential.segment(p - k, rows);
    Vector y = differential.segment(p, rows);
    Eigen::ColPivHouseholderQR<Matrix> qr(x);
    if (qr.rank() < p + 1) break;  // constant difference has no lag structure
    Vector beta = qr.solve(y);
    Vector resid = y - x * beta;
    double s2 = resid.squaredNorm() / static_cast<double>(rows - (p + 1));
    Matrix xtx_inv = (x.transpose() * x).ldlt().solve(Matrix::Identity(p + 1, p + 1));
    double se_p = std::sqrt(s2 * xtx_inv(p, p));
    if (!(se_p > 0.0) || std::fabs(beta(p)) / se_p <= 1.96) break;
    best = static_cast<std::size_t>(p);
  }
  return best;
}

std::size_t auto_block_length(const score::LossMatrix& losses) {
  losses.validate();
  const auto m = losses.losses.cols();
  if (m < 2) throw ConfigError("auto_block_length: need at least two models");

  std::size_t best = 1;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j)
      best = std::max(best, auto_block_length(Vector(losses.losses.col(i) - losses.losses.col(j))));
  return best;
}

std::map<std::string, double> inclusion_rates(const std::vector<Result>& runs, double alpha) {
  if (runs.empty()) throw ConfigError("inclusion_rates: no runs");
  std::map<std::string, double> counts;
  for (const auto& run : runs)
    for (const auto& m : run.models) counts.emplace(m.model, 0.0);  // never-surviving models report 0
  for (const auto& run : runs)
    for (const auto& name : run.survivors_at(alpha)) counts[name] += 1.0;
  for (auto& [name, value] : counts) value /= static_cast<double>(runs.size());
  return counts;
}

}  // namespace fq::mcs
