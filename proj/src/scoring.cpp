#include "fq/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fq/dates.hpp"
#include "fq/stats.hpp"

namespace fq::score {

namespace {

constexpr std::size_t kFullPairLimit = 2000;  // exact cross term up to here
constexpr std::size_t kPairOffsets = 100;     // systematic offsets above it

void check_forecast(const Matrix& samples, const Vector& y) {
  if (samples.rows() == 0) throw DataError("scoring: empty forecast sample");
  if (samples.cols() != y.size()) throw DataError("scoring: forecast and outcome dimensions differ");
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (!std::isfinite(y(i))) throw DataError("scoring: non-finite outcome");
}

}  // namespace

double crps_weight(CrpsWeight w, double alpha) {
  switch (w) {
    case CrpsWeight::uniform: return 1.0;
    case CrpsWeight::centre: return alpha * (1.0 - alpha);
    case CrpsWeight::left_tail: return (1.0 - alpha) * (1.0 - alpha);
    case CrpsWeight::right_tail: return alpha * alpha;
    case CrpsWeight::tails: return (2.0 * alpha - 1.0) * (2.0 * alpha - 1.0);
  }
  throw ConfigError("crps_weight: unknown weight");
}

double wcrps(const Matrix& samples, const Vector& y, CrpsWeight weight, std::size_t grid) {
  check_forecast(samples, y);
  if (grid == 0) throw ConfigError("wcrps: quadrature grid must be non-empty");
  const auto s = static_cast<double>(samples.rows());
  const double lo = 0.5 / s;
  const double hi = 1.0 - 0.5 / s;
  double total = 0.0;
  std::vector<double> col(static_cast<std::size_t>(samples.rows()));
  for (Eigen::Index j = 0; j < samples.cols(); ++j) {
    for (Eigen::Index i = 0; i < samples.rows(); ++i) col[static_cast<std::size_t>(i)] = samples(i, j);
    std::sort(col.begin(), col.end());
    double margin = 0.0;
    for (std::size_t g = 0; g < grid; ++g) {
      double alpha = std::clamp((static_cast<double>(g) + 0.5) / static_cast<double>(grid), lo, hi);
      double q = stats::quantile_linear_sorted(col, alpha);
      double indicator = y(j) <= q ? 1.0 : 0.0;
      margin += 2.0 * (indicator - alpha) * (q - y(j)) * crps_weight(weight, alpha);
    }
    total += margin / static_cast<double>(grid);
  }
  return total / static_cast<double>(samples.cols());
}

double energy_score(const Matrix& samples, const Vector& y) {
  check_forecast(samples, y);
  const auto s = samples.rows();
  double to_outcome = 0.0;
  for (Eigen::Index i = 0; i < s; ++i) to_outcome += (samples.row(i).transpose() - y).norm();
  to_outcome /= static_cast<double>(s);

  double cross = 0.0;
  if (static_cast<std::size_t>(s) <= kFullPairLimit) {
    for (Eigen::Index i = 0; i < s; ++i)
      for (Eigen::Index j = 0; j < s; ++j) cross += (samples.row(i) - samples.row(j)).norm();
    cross /= static_cast<double>(s) * static_cast<double>(s);
  } else {
    // Deterministic offset pairs (i, i+k mod s), k = 1..kPairOffsets.
    for (std::size_t k = 1; k <= kPairOffsets; ++k)
      for (Eigen::Index i = 0; i < s; ++i) {
        Eigen::Index j = static_cast<Eigen::Index>((static_cast<std::size_t>(i) + k) % static_cast<std::size_t>(s));
        cross += (samples.row(i) - samples.row(j)).norm();
      }
    cross /= static_cast<double>(kPairOffsets) * static_cast<double>(s);
  }
  return to_outcome - 0.5 * cross;
}

double variogram_score(const Matrix& samples, const Vector& y, double p) {
  check_forecast(samples, y);
  if (!(p > 0.0)) throw ConfigError("variogram_score: order must be positive");
  const auto n = samples.cols();
  const auto s = samples.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      double mean_pow = 0.0;
      for (Eigen::Index r = 0; r < s; ++r) mean_pow += std::pow(std::fabs(samples(r, i) - samples(r, j)), p);
      mean_pow /= static_cast<double>(s);
      double gap = std::pow(std::fabs(y(i) - y(j)), p) - mean_pow;
      total += gap * gap;
    }
  return total;
}

std::string ScoringRule::id() const {
  switch (kind) {
    case Kind::energy: return "es";
    case Kind::wcrps:
      switch (weight) {
        case CrpsWeight::uniform: return "wcrps_uniform";
        case CrpsWeight::centre: return "wcrps_centre";
        case CrpsWeight::left_tail: return "wcrps_left_tail";
        case CrpsWeight::right_tail: return "wcrps_right_tail";
        case CrpsWeight::tails: return "wcrps_tails";
      }
      break;
    case Kind::variogram: {
      // Render 0.5 as "0.5" and integral orders without a decimal point.
      std::ostringstream out;
      out << "vs_" << p;
      return out.str();
    }
  }
  throw ConfigError("scoring rule: unknown kind");
}

ScoringRule ScoringRule::parse(const std::string& id) {
  ScoringRule r;
  if (id == "es") {
    r.kind = Kind::energy;
    return r;
  }
  if (id.rfind("wcrps_", 0) == 0) {
    r.kind = Kind::wcrps;
    const std::string tag = id.substr(6);
    if (tag == "uniform") r.weight = CrpsWeight::uniform;
    else if (tag == "centre") r.weight = CrpsWeight::centre;
    else if (tag == "left_tail") r.weight = CrpsWeight::left_tail;
    else if (tag == "right_tail") r.weight = CrpsWeight::right_tail;
    else if (tag == "tails") r.weight = CrpsWeight::tails;
    else throw ConfigError("unknown scoring rule '" + id + "'");
    return r;
  }
  if (id.rfind("vs_", 0) == 0) {
    r.kind = Kind::variogram;
    try {
      std::size_t used = 0;
      r.p = std::stod(id.substr(3), &used);
      if (used != id.size() - 3) throw std::invalid_argument(id);
    } catch (const std::exception&) {
      throw ConfigError("unknown scoring rule '" + id + "'");
    }
    if (!(r.p > 0.0)) throw ConfigError("unknown scoring rule '" + id + "'");
    return r;
  }
  throw ConfigError("unknown scoring rule '" + id + "'");
}

std::vector<ScoringRule> ScoringRule::standard_set() {
  std::vector<ScoringRule> rules;
  for (auto w : {CrpsWeight::uniform, CrpsWeight::centre, CrpsWeight::left_tail, CrpsWeight::right_tail,
                 CrpsWeight::tails}) {
    ScoringRule r;
    r.kind = Kind::wcrps;
    r.weight = w;
    rules.push_back(r);
  }
  ScoringRule es;
  es.kind = Kind::energy;
  rules.push_back(es);
  for (double p : {0.5, 1.0, 2.0}) {
    ScoringRule vs;
    vs.kind = Kind::variogram;
    vs.p = p;
    rules.push_back(vs);
  }
  return rules;
}

double apply_rule(const ScoringRule& rule, const Matrix& samples, const Vector& y) {
  switch (rule.kind) {
    case ScoringRule::Kind::wcrps: return wcrps(samples, y, rule.weight);
    case ScoringRule::Kind::energy: return energy_score(samples, y);
    case ScoringRule::Kind::variogram: return variogram_score(samples, y, rule.p);
  }
  throw ConfigError("apply_rule: unknown kind");
}

void LossMatrix::validate() const {
  if (static_cast<Eigen::Index>(models.size()) != losses.cols())
    throw DataError("loss matrix: model labels do not match the column count");
  if (static_cast<Eigen::Index>(dates.size()) != losses.rows())
    throw DataError("loss matrix: date labels do not match the row count");
  for (std::size_t i = 1; i < dates.size(); ++i)
    if (dates[i] <= dates[i - 1]) throw DataError("loss matrix: dates must be strictly increasing");
  for (Eigen::Index r = 0; r < losses.rows(); ++r)
    for (Eigen::Index c = 0; c < losses.cols(); ++c)
      if (!std::isfinite(losses(r, c))) throw DataError("loss matrix: non-finite loss at row " + dates[static_cast<std::size_t>(r)]);
}

Eigen::Index LossMatrix::model_index(const std::string& name) const {
  for (std::size_t i = 0; i < models.size(); ++i)
    if (models[i] == name) return static_cast<Eigen::Index>(i);
  return -1;
}

void LossMatrix::write_csv(const std::string& path) const {
  validate();
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "date";
  for (const auto& m : models) out << ',' << m;
  out << '\n';
  char buf[32];
  for (Eigen::Index r = 0; r < losses.rows(); ++r) {
    out << dates[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < losses.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", losses(r, c));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw Error("failed while writing '" + path + "'");
}

LossMatrix LossMatrix::read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "': empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  LossMatrix lm;
  std::stringstream header(line);
  std::string field;
  if (!std::getline(header, field, ',') || field != "date")
    throw DataError("'" + path + "': first header column must be 'date'");
  while (std::getline(header, field, ',')) {
    if (field.empty()) throw DataError("'" + path + "': empty model name in header");
    lm.models.push_back(field);
  }
  if (lm.models.empty()) throw DataError("'" + path + "': no model columns");

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::getline(ss, field, ',');
    lm.dates.push_back(dates::to_iso(dates::parse_serial(field, "%Y-%m-%d")));
    std::vector<double> row;
    while (std::getline(ss, field, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw DataError("'" + path + "' line " + std::to_string(line_no) + ": bad numeric field '" + field + "'");
      }
    }
    if (row.size() != lm.models.size())
      throw DataError("'" + path + "' line " + std::to_string(line_no) + ": expected " +
                      std::to_string(lm.models.size()) + " losses, found " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  lm.losses.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(lm.models.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      lm.losses(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  lm.validate();
  return lm;
}

}  // namespace fq::score
