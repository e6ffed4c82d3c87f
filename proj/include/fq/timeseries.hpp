#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fq/common.hpp"

namespace fq::ts {

// A dated panel of aligned numeric series.  Dates are ISO-8601 strings in
// strictly increasing order; row i of `values` belongs to dates[i].
struct Panel {
  std::vector<std::string> dates;
  std::vector<std::string> names;
  Matrix values;

  std::size_t rows() const { return dates.size(); }
  std::size_t cols() const { return names.size(); }
};

struct LoadResult {
  Panel panel;
  std::size_t rows_dropped = 0;  // rows removed because of missing cells
};

// Reads a CSV whose first column is the date and remaining columns are
// numeric series.  Rows containing a missing cell ("", "NA", "NaN") are
// dropped and counted; any other non-numeric cell is an error naming the
// row and column.  Duplicate dates are rejected; rows are sorted by date
// and date labels are normalized to ISO-8601.
LoadResult load_panel(const std::string& path, const std::string& date_format = "%Y-%m-%d");

// Writes a panel back to CSV (date column first).
void write_panel(const Panel& panel, const std::string& path);

enum class Transform { none, log_returns, simple_returns, first_difference };

Transform transform_from_string(const std::string& name);

// Converts levels to (approximately) stationary series.  Return panels have
// one fewer row than the input except for `none`.  `multiplier` rescales the
// transformed values (e.g. 100 for percentage returns); the default keeps
// raw units.
Panel to_stationary(const Panel& panel, Transform method, double multiplier = 1.0);

// Reconstructs levels from log-returns given the initial level row.
// Inverse of to_stationary(log_returns) up to floating-point roundoff.
Matrix accumulate_log_returns(const Vector& initial_level, const Matrix& log_returns, double multiplier = 1.0);

struct WindowSpec {
  std::size_t length = 0;
  std::size_t step = 1;
};

// A calibration window [start, start+length) paired with its forecast
// target row (the row immediately after the window).
struct RollingWindow {
  std::size_t start = 0;
  std::size_t length = 0;
  std::size_t target = 0;
};

// Enumerates calibration/target pairs.  Windows advance by `step`; every
// target lies strictly inside the panel, so no window sees its own target.
std::vector<RollingWindow> rolling_windows(std::size_t rows, const WindowSpec& spec);

// Copies rows [start, start+length) into a stand-alone panel.
Panel slice(const Panel& panel, std::size_t start, std::size_t length);

struct DemeanResult {
  Matrix centered;
  Vector means;
};

DemeanResult demean(const Matrix& values);

}  // namespace fq::ts
