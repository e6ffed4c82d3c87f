#include "fq/qreg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fq/parallel.hpp"
#include "fq/stats.hpp"

namespace fq::qreg {

namespace {

constexpr int kMaxIterations = 500;
constexpr double kParamTol = 1e-8;  // relative to the residual scale
constexpr double kRankTol = 1e-10;

double check_loss(const Vector& u, double tau) {
  double s = 0.0;
  for (Eigen::Index t = 0; t < u.size(); ++t) s += u(t) * (tau - (u(t) < 0.0 ? 1.0 : 0.0));
  return s / static_cast<double>(u.size());
}

struct LineSearchResult {
  double step = 0.0;
  Eigen::Index at = -1;  // observation whose breakpoint the minimizer lands on
};

// Exact minimizer of the piecewise-linear map s -> sum_i rho_tau(u_i - s*v_i):
// walk the breakpoints u_i/v_i in ascending order until the right-derivative
// turns nonnegative.
LineSearchResult exact_line_search(const Vector& u, const Vector& v, double tau) {
  struct Break {
    double at;
    double jump;
    Eigen::Index idx;
  };
  std::vector<Break> breaks;
  breaks.reserve(static_cast<std::size_t>(u.size()));
  double slope = 0.0;  // derivative as s -> -inf
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    double vi = v(i);
    if (std::fabs(vi) < 1e-300) continue;
    breaks.push_back({u(i) / vi, std::fabs(vi), i});
    slope -= vi > 0.0 ? vi * tau : vi * (tau - 1.0);
  }
  if (breaks.empty()) return {};
  std::sort(breaks.begin(), breaks.end(), [](const Break& a, const Break& b) { return a.at < b.at; });
  for (const auto& b : breaks) {
    slope += b.jump;
    if (slope >= 0.0) return {b.at, b.idx};
  }
  return {breaks.back().at, breaks.back().idx};
}

// The check loss is piecewise linear, so its minimum sits on a vertex where
// m+1 observations are fitted exactly.  Starting from the warm parameter
// vector, walk vertex to vertex: the edge directions of the current vertex
// are the columns of the inverse active design, and an exact line search
// along each edge either certifies optimality or hands over the entering
// observation.  Strict descent over finitely many vertices terminates.
struct VertexResult {
  Vector theta;
  double loss = std::numeric_limits<double>::infinity();
  bool optimal = false;
};

double loss_of(const Matrix& z, const Vector& y, double tau, const Vector& theta) {
  Vector u = y - z * theta;
  double s = 0.0;
  for (Eigen::Index t = 0; t < u.size(); ++t) s += u(t) * (tau - (u(t) < 0.0 ? 1.0 : 0.0));
  return s / static_cast<double>(u.size());
}

VertexResult vertex_descent(const Matrix& z, const Vector& y, double tau, const Vector& start) {
  const Eigen::Index t_obs = z.rows();
  const Eigen::Index p = z.cols();
  VertexResult out;
  out.theta = start;
  out.loss = loss_of(z, y, tau, start);

  // Greedily assemble an invertible basis from the observations closest to
  // the warm fit.
  Vector u0 = y - z * start;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(t_obs));
  for (Eigen::Index i = 0; i < t_obs; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return std::fabs(u0(a)) < std::fabs(u0(b)); });
  std::vector<Eigen::Index> active;
  active.reserve(static_cast<std::size_t>(p));
  Matrix basis(p, p);
  for (Eigen::Index cand : order) {
    if (static_cast<Eigen::Index>(active.size()) == p) break;
    basis.row(static_cast<Eigen::Index>(active.size())) = z.row(cand);
    Eigen::ColPivHouseholderQR<Matrix> probe(basis.topRows(static_cast<Eigen::Index>(active.size()) + 1));
    if (probe.rank() == static_cast<Eigen::Index>(active.size()) + 1) active.push_back(cand);
  }
  if (static_cast<Eigen::Index>(active.size()) < p) return out;  // cannot happen for full-rank z

  const int max_moves = 200 + 4 * static_cast<int>(t_obs);
  double prev_loss = std::numeric_limits<double>::infinity();
  for (int move = 0; move < max_moves; ++move) {
    Matrix zs(p, p);
    Vector ysub(p);
    for (Eigen::Index r = 0; r < p; ++r) {
      zs.row(r) = z.row(active[static_cast<std::size_t>(r)]);
      ysub(r) = y(active[static_cast<std::size_t>(r)]);
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(zs);
    if (!qr.isInvertible()) break;
    Vector theta = qr.solve(ysub);
    if (!theta.allFinite()) break;
    double loss = loss_of(z, y, tau, theta);
    const double tol = 1e-13 * (1.0 + std::fabs(loss));
    if (loss < out.loss) {
      out.loss = loss;
      out.theta = theta;
    }
    if (loss >= prev_loss - tol) {  // descent exhausted to numerical noise
      out.optimal = true;
      return out;
    }
    prev_loss = loss;

    Matrix edges = qr.solve(Matrix::Identity(p, p));
    Vector u = y - z * theta;
    for (Eigen::Index r = 0; r < p; ++r) u(active[static_cast<std::size_t>(r)]) = 0.0;

    double best_cand = loss;
    Eigen::Index leave = -1, enter = -1;
    for (Eigen::Index k = 0; k < p; ++k) {
      Vector v = z * edges.col(k);
      for (Eigen::Index r = 0; r < p; ++r)
        if (r != k) v(active[static_cast<std::size_t>(r)]) = 0.0;
      LineSearchResult ls = exact_line_search(u, v, tau);
      if (ls.at < 0 || ls.at == active[static_cast<std::size_t>(k)] || ls.step == 0.0) continue;
      double cand = 0.0;
      for (Eigen::Index i = 0; i < t_obs; ++i) {
        double r = u(i) - ls.step * v(i);
        cand += r * (tau - (r < 0.0 ? 1.0 : 0.0));
      }
      cand /= static_cast<double>(t_obs);
      if (cand < best_cand - tol) {
        best_cand = cand;
        leave = k;
        enter = ls.at;
      }
    }
    if (leave < 0) {  // no edge improves: this vertex is the global optimum
      out.optimal = true;
      return out;
    }
    active[static_cast<std::size_t>(leave)] = enter;
  }
  return out;
}

}  // namespace

QuantilePartition::QuantilePartition(std::vector<double> levels) : taus(std::move(levels)) {
  if (taus.empty()) throw ConfigError("quantile partition must be non-empty");
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (!(taus[i] > 0.0 && taus[i] < 1.0))
      throw ConfigError("quantile level " + std::to_string(taus[i]) + " outside (0,1)");
    if (i > 0 && taus[i] <= taus[i - 1]) throw ConfigError("quantile levels must be strictly increasing");
  }
}

QuantilePartition QuantilePartition::tail_weighted_9() {
  return QuantilePartition({0.001, 0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95, 0.999});
}

QuantilePartition QuantilePartition::equidistant(std::size_t k) {
  if (k == 0) throw ConfigError("equidistant partition needs k >= 1");
  std::vector<double> taus(k);
  for (std::size_t i = 0; i < k; ++i) taus[i] = static_cast<double>(i + 1) / static_cast<double>(k + 1);
  return QuantilePartition(std::move(taus));
}

double pinball_loss(const Vector& u, double tau) {
  if (u.size() == 0) throw Error("pinball_loss: empty residual vector");
  if (!(tau > 0.0 && tau < 1.0)) throw Error("pinball_loss: tau outside (0,1)");
  return check_loss(u, tau);
}

QuantileFit fit_quantile(const Matrix& X, const Vector& y, double tau) {
  const auto t_obs = y.size();
  const auto m = X.cols();
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("fit_quantile: tau outside (0,1)");
  if (t_obs == 0) throw DataError("fit_quantile: empty sample");
  if (m > 0 && X.rows() != t_obs) throw DataError("fit_quantile: X rows do not match y");
  if (t_obs <= m) throw DataError("fit_quantile: need more observations than regressors");

  // With no regressors the optimum is the sample quantile itself (lower
  // order statistic under the documented tie convention).
  if (m == 0) {
    std::vector<double> ys(y.data(), y.data() + t_obs);
    std::sort(ys.begin(), ys.end());
    QuantileFit fit;
    fit.intercept = stats::empirical_quantile_lower_sorted(ys, tau);
    fit.coefs = Vector();
    fit.loss = check_loss((y.array() - fit.intercept).matrix(), tau);
    fit.converged = true;
    return fit;
  }

  Matrix z(t_obs, m + 1);
  z.col(0).setOnes();
  z.rightCols(m) = X;

  Eigen::BDCSVD<Matrix> svd(z);
  const auto& sv = svd.singularValues();
  if (sv(sv.size() - 1) < kRankTol * sv(0)) throw FitError("fit_quantile: rank-deficient design");

  // Starting point: sample quantile intercept, zero slopes.
  std::vector<double> ys(y.data(), y.data() + t_obs);
  std::sort(ys.begin(), ys.end());
  Vector theta = Vector::Zero(m + 1);
  theta(0) = stats::empirical_quantile_lower_sorted(ys, tau);

  auto loss_at = [&](const Vector& th) { return check_loss(y - z * th, tau); };

  Vector best = theta;
  double best_loss = loss_at(theta);
  auto consider = [&](const Vector& th) {
    if (!th.allFinite()) return;
    double l = loss_at(th);
    if (l < best_loss - 1e-12 * (1.0 + std::fabs(best_loss))) {
      best_loss = l;
      best = th;
    }
  };

  const double scale = 1.0 + (y - z * theta).cwiseAbs().mean();
  const double eps_floor = 1e-9 * scale;
  const double param_tol = kParamTol * scale;
  double eps = 0.1 * scale;
  int loss_stalls = 0;

  for (int it = 0; it < kMaxIterations; ++it) {
    Vector u = y - z * theta;
    // Quadratic majorization of 0.5*sqrt(u^2+eps^2) + (tau-0.5)*u gives the
    // step direction; an exact line search on the true check loss picks the
    // step length, so every iteration descends the real objective.
    Vector w = (u.array().square() + eps * eps).sqrt().inverse() * 0.5;
    Matrix a = z.transpose() * w.asDiagonal() * z;
    Vector rhs = z.transpose() * (w.asDiagonal() * y) + (tau - 0.5) * z.colwise().sum().transpose();
    Eigen::LDLT<Matrix> ldlt(a);
    if (ldlt.info() != Eigen::Success) throw FitError("fit_quantile: weighted normal equations not solvable");
    Vector direction = ldlt.solve(rhs) - theta;
    if (!direction.allFinite()) throw FitError("fit_quantile: iteration produced non-finite parameters");
    double step = exact_line_search(u, z * direction, tau).step;
    Vector theta_new = theta + step * direction;
    double delta = (theta_new - theta).cwiseAbs().maxCoeff();
    theta = theta_new;
    double prev_best = best_loss;
    consider(theta);
    if (delta < param_tol) break;
    loss_stalls = best_loss < prev_best ? 0 : loss_stalls + 1;
    if (loss_stalls >= 3) break;
    // Tie the smoothing level to the progress scale.
    eps = std::max(eps_floor, std::min(eps, 0.5 * delta));
  }

  // Finish on the exact optimum: descend vertex to vertex on the true loss.
  VertexResult vertex = vertex_descent(z, y, tau, best);
  consider(vertex.theta);

  QuantileFit fit;
  fit.intercept = best(0);
  fit.coefs = m > 0 ? Vector(best.tail(m)) : Vector();
  fit.loss = best_loss;
  fit.converged = vertex.optimal;
  if (!fit.converged)
    throw NonConvergenceError("fit_quantile: vertex descent did not certify an optimum", fit);
  return fit;
}

Vector VariableFit::residuals(const Matrix& X, const Vector& y, std::size_t tau_index) const {
  if (tau_index >= static_cast<std::size_t>(intercepts.size())) throw Error("residuals: tau index out of range");
  Vector pred = Vector::Constant(y.size(), intercepts(static_cast<Eigen::Index>(tau_index)));
  if (coefs.cols() > 0) pred += X * coefs.row(static_cast<Eigen::Index>(tau_index)).transpose();
  return y - pred;
}

QuantileFitSet fit_partition(const Matrix& X, const Matrix& Y, const QuantilePartition& partition, std::size_t jobs) {
  if (X.cols() > 0 && X.rows() != Y.rows()) throw DataError("fit_partition: X and Y row counts differ");
  const auto n_vars = static_cast<std::size_t>(Y.cols());
  const auto q = partition.size();
  QuantileFitSet set;
  set.partition = partition;
  set.n_obs = static_cast<std::size_t>(Y.rows());
  set.n_regressors = static_cast<std::size_t>(X.cols());
  set.fits.resize(n_vars);
  for (auto& f : set.fits) {
    f.intercepts.resize(static_cast<Eigen::Index>(q));
    f.coefs.resize(static_cast<Eigen::Index>(q), X.cols());
  }
  parallel_for(n_vars * q, jobs, [&](std::size_t task) {
    const std::size_t v = task / q;
    const std::size_t k = task % q;
    QuantileFit fit = fit_quantile(X, Y.col(static_cast<Eigen::Index>(v)), partition.taus[k]);
    set.fits[v].intercepts(static_cast<Eigen::Index>(k)) = fit.intercept;
    if (X.cols() > 0) set.fits[v].coefs.row(static_cast<Eigen::Index>(k)) = fit.coefs.transpose();
  });
  return set;
}

Matrix predict_nodes(const QuantileFitSet& fit, const Vector& x_star) {
  if (static_cast<std::size_t>(x_star.size()) != fit.n_regressors)
    throw DataError("predict_nodes: x_star length does not match the fitted regressors");
  const auto q = static_cast<Eigen::Index>(fit.partition.size());
  Matrix nodes(static_cast<Eigen::Index>(fit.fits.size()), q);
  for (std::size_t v = 0; v < fit.fits.size(); ++v) {
    const auto& f = fit.fits[v];
    Vector row = f.intercepts;
    if (fit.n_regressors > 0) row += f.coefs * x_star;
    nodes.row(static_cast<Eigen::Index>(v)) = row.transpose();
  }
  return nodes;
}

Matrix rearrange(Matrix nodes) {
  std::vector<double> row(static_cast<std::size_t>(nodes.cols()));
  for (Eigen::Index i = 0; i < nodes.rows(); ++i) {
    for (Eigen::Index j = 0; j < nodes.cols(); ++j) row[static_cast<std::size_t>(j)] = nodes(i, j);
    std::sort(row.begin(), row.end());
    for (Eigen::Index j = 0; j < nodes.cols(); ++j) nodes(i, j) = row[static_cast<std::size_t>(j)];
  }
  return nodes;
}

}  // namespace fq::qreg
