#include "fq/timeseries.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "fq/dates.hpp"

namespace fq::ts {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // Trim surrounding whitespace and an optional simple quote pair.
    auto b = field.find_first_not_of(" \t\r");
    auto e = field.find_last_not_of(" \t\r");
    field = b == std::string::npos ? "" : field.substr(b, e - b + 1);
    if (field.size() >= 2 && field.front() == '"' && field.back() == '"') field = field.substr(1, field.size() - 2);
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back("");
  return out;
}

bool is_missing(const std::string& s) { return s.empty() || s == "NA" || s == "NaN" || s == "nan"; }

}  // namespace

LoadResult load_panel(const std::string& path, const std::string& date_format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "' is empty");
  auto header = split_csv_line(line);
  if (header.size() < 2) throw DataError("'" + path + "': header must have a date column and at least one series");

  LoadResult result;
  result.panel.names.assign(header.begin() + 1, header.end());
  const std::size_t ncol = header.size();

  std::vector<std::int64_t> serials;
  std::vector<Vector> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != ncol)
      throw DataError("'" + path + "' line " + std::to_string(lineno) + ": expected " + std::to_string(ncol) +
                      " fields, found " + std::to_string(fields.size()));
    bool missing = false;
    Vector row(static_cast<Eigen::Index>(ncol - 1));
    for (std::size_t j = 1; j < ncol; ++j) {
      if (is_missing(fields[j])) {
        missing = true;
        continue;
      }
      try {
        std::size_t used = 0;
        row(static_cast<Eigen::Index>(j - 1)) = std::stod(fields[j], &used);
        if (used != fields[j].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw DataError("'" + path + "' line " + std::to_string(lineno) + ", column '" + header[j] +
                        "': non-numeric value '" + fields[j] + "'");
      }
    }
    if (missing) {
      ++result.rows_dropped;
      continue;
    }
    serials.push_back(dates::parse_serial(fields[0], date_format));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("'" + path + "': no usable rows");

  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return serials[a] < serials[b]; });
  for (std::size_t i = 1; i < order.size(); ++i)
    if (serials[order[i]] == serials[order[i - 1]])
      throw DataError("'" + path + "': duplicate date " + dates::to_iso(serials[order[i]]));

  auto& p = result.panel;
  p.dates.resize(rows.size());
  p.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ncol - 1));
  for (std::size_t i = 0; i < order.size(); ++i) {
    p.dates[i] = dates::to_iso(serials[order[i]]);
    p.values.row(static_cast<Eigen::Index>(i)) = rows[order[i]];
  }
  return result;
}

void write_panel(const Panel& panel, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "date";
  for (const auto& n : panel.names) out << ',' << n;
  out << '\n';
  out.precision(17);
  for (std::size_t i = 0; i < panel.rows(); ++i) {
    out << panel.dates[i];
    for (Eigen::Index j = 0; j < panel.values.cols(); ++j) out << ',' << panel.values(static_cast<Eigen::Index>(i), j);
    out << '\n';
  }
}

Transform transform_from_string(const std::string& name) {
  if (name == "none") return Transform::none;
  if (name == "log_returns") return Transform::log_returns;
  if (name == "simple_returns") return Transform::simple_returns;
  if (name == "first_difference") return Transform::first_difference;
  throw ConfigError("unknown transform '" + name + "'");
}

Panel to_stationary(const Panel& panel, Transform method, double multiplier) {
  if (method == Transform::none) {
    Panel out = panel;
    if (multiplier != 1.0) out.values *= multiplier;
    return out;
  }
  if (panel.rows() < 2) throw DataError("to_stationary: need at least two rows");
  const auto n = static_cast<Eigen::Index>(panel.cols());
  const auto t = static_cast<Eigen::Index>(panel.rows());
  Panel out;
  out.names = panel.names;
  out.dates.assign(panel.dates.begin() + 1, panel.dates.end());
  out.values.resize(t - 1, n);
  for (Eigen::Index i = 1; i < t; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double prev = panel.values(i - 1, j), cur = panel.values(i, j);
      double v = 0.0;
      switch (method) {
        case Transform::log_returns:
          if (prev <= 0.0 || cur <= 0.0)
            throw DataError("to_stationary: non-positive level at row " + std::to_string(i) + ", series '" +
                            panel.names[static_cast<std::size_t>(j)] + "'");
          v = std::log(cur / prev);
          break;
        case Transform::simple_returns:
          if (prev == 0.0)
            throw DataError("to_stationary: zero level at row " + std::to_string(i - 1) + ", series '" +
                            panel.names[static_cast<std::size_t>(j)] + "'");
          v = cur / prev - 1.0;
          break;
        case Transform::first_difference: v = cur - prev; break;
        case Transform::none: break;
      }
      out.values(i - 1, j) = multiplier * v;
    }
  }
  return out;
}

Matrix accumulate_log_returns(const Vector& initial_level, const Matrix& log_returns, double multiplier) {
  if (initial_level.size() != log_returns.cols()) throw DataError("accumulate_log_returns: dimension mismatch");
  Matrix levels(log_returns.rows() + 1, log_returns.cols());
  levels.row(0) = initial_level.transpose();
  for (Eigen::Index i = 0; i < log_returns.rows(); ++i)
    levels.row(i + 1) = levels.row(i).array() * (log_returns.row(i).array() / multiplier).exp();
  return levels;
}

std::vector<RollingWindow> rolling_windows(std::size_t rows, const WindowSpec& spec) {
  if (spec.length == 0) throw ConfigError("rolling_windows: length must be positive");
  if (spec.step == 0) throw ConfigError("rolling_windows: step must be positive");
  if (spec.length >= rows) throw ConfigError("rolling_windows: window length must be smaller than the panel");
  std::vector<RollingWindow> out;
  for (std::size_t start = 0; start + spec.length < rows; start += spec.step)
    out.push_back({start, spec.length, start + spec.length});
  return out;
}

Panel slice(const Panel& panel, std::size_t start, std::size_t length) {
  if (start + length > panel.rows()) throw Error("slice: range exceeds panel");
  Panel out;
  out.names = panel.names;
  out.dates.assign(panel.dates.begin() + static_cast<std::ptrdiff_t>(start),
                   panel.dates.begin() + static_cast<std::ptrdiff_t>(start + length));
  out.values = panel.values.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(length));
  return out;
}

DemeanResult demean(const Matrix& values) {
  DemeanResult r;
  r.means = values.colwise().mean();
  r.centered = values.rowwise() - r.means.transpose();
  return r;
}

}  // namespace fq::ts
