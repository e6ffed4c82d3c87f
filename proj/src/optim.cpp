#include "fq/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace fq::optim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

Result nelder_mead(const std::function<double(const Vector&)>& f, const Vector& x0, const Options& options) {
  const Eigen::Index n = x0.size();
  if (n == 0) throw ConfigError("nelder_mead: empty start point");
  if (!(options.tol > 0.0)) throw ConfigError("nelder_mead: tol must be positive");

  Result res;
  auto eval = [&](const Vector& x) {
    ++res.evaluations;
    double v = f(x);
    return std::isfinite(v) ? v : kInf;
  };

  // Start simplex: x0 plus one displaced point per coordinate.
  std::vector<Vector> xs(static_cast<std::size_t>(n) + 1, x0);
  std::vector<double> fs(static_cast<std::size_t>(n) + 1);
  fs[0] = eval(xs[0]);
  for (Eigen::Index i = 0; i < n; ++i) {
    xs[static_cast<std::size_t>(i) + 1](i) += options.initial_step * (1.0 + std::fabs(x0(i)));
    fs[static_cast<std::size_t>(i) + 1] = eval(xs[static_cast<std::size_t>(i) + 1]);
  }

  std::vector<std::size_t> order(xs.size());
  auto sort_simplex = [&] {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
  };

  while (res.evaluations < options.max_evaluations) {
    sort_simplex();
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second_worst = order[order.size() - 2];

    double spread = fs[worst] - fs[best];
    if (std::isfinite(spread) && spread <= options.tol * (1.0 + std::fabs(fs[best]))) {
      res.converged = true;
      break;
    }

    Vector centroid = Vector::Zero(n);
    for (std::size_t i = 0; i < order.size(); ++i)
      if (i != worst) centroid += xs[i];
    centroid /= static_cast<double>(n);

    Vector reflected = centroid + (centroid - xs[worst]);
    double fr = eval(reflected);
    if (fr < fs[best]) {
      Vector expanded = centroid + 2.0 * (centroid - xs[worst]);
      double fe = eval(expanded);
      if (fe < fr) {
        xs[worst] = std::move(expanded);
        fs[worst] = fe;
      } else {
        xs[worst] = std::move(reflected);
        fs[worst] = fr;
      }
      continue;
    }
    if (fr < fs[second_worst]) {
      xs[worst] = std::move(reflected);
      fs[worst] = fr;
      continue;
    }
    Vector contracted = fr < fs[worst] ? Vector(centroid + 0.5 * (reflected - centroid))
                                       : Vector(centroid + 0.5 * (xs[worst] - centroid));
    double fc = eval(contracted);
    if (fc < std::min(fr, fs[worst])) {
      xs[worst] = std::move(contracted);
      fs[worst] = fc;
      continue;
    }
    // Shrink toward the best point.
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i == best) continue;
      xs[i] = xs[best] + 0.5 * (xs[i] - xs[best]);
      fs[i] = eval(xs[i]);
    }
  }

  sort_simplex();
  res.x = xs[order.front()];
  res.value = fs[order.front()];
  if (!std::isfinite(res.value)) throw FitError("nelder_mead: objective is not finite anywhere near the start");
  return res;
}

}  // namespace fq::optim
