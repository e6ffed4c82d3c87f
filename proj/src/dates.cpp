#include "fq/dates.hpp"

#include <array>
#include <cstdio>

#include "fq/common.hpp"

namespace fq::dates {

namespace {

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
  static constexpr std::array<int, 12> kDays = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m == 2 && is_leap(y)) return 29;
  return kDays[static_cast<std::size_t>(m - 1)];
}

}  // namespace

std::int64_t serial_from_civil(int y, int m, int d) {
  // Howard Hinnant's days_from_civil.
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_serial(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

std::int64_t parse_serial(std::string_view text, std::string_view format) {
  int y = -1, m = -1, d = -1;
  std::size_t ti = 0;
  auto read_int = [&](std::size_t digits) -> int {
    if (ti + digits > text.size()) throw DataError("unparseable date '" + std::string(text) + "'");
    int v = 0;
    for (std::size_t k = 0; k < digits; ++k) {
      char c = text[ti + k];
      if (c < '0' || c > '9') throw DataError("unparseable date '" + std::string(text) + "'");
      v = v * 10 + (c - '0');
    }
    ti += digits;
    return v;
  };
  for (std::size_t fi = 0; fi < format.size(); ++fi) {
    if (format[fi] == '%' && fi + 1 < format.size()) {
      char spec = format[++fi];
      switch (spec) {
        case 'Y': y = read_int(4); break;
        case 'm': m = read_int(2); break;
        case 'd': d = read_int(2); break;
        default: throw ConfigError(std::string("unsupported date format token %") + spec);
      }
    } else {
      if (ti >= text.size() || text[ti] != format[fi])
        throw DataError("unparseable date '" + std::string(text) + "' for format '" + std::string(format) + "'");
      ++ti;
    }
  }
  if (ti != text.size()) throw DataError("trailing characters in date '" + std::string(text) + "'");
  if (y < 0 || m < 1 || m > 12 || d < 1 || d > days_in_month(y, m))
    throw DataError("invalid calendar date '" + std::string(text) + "'");
  return serial_from_civil(y, m, d);
}

std::string to_iso(std::int64_t serial) {
  int y, m, d;
  civil_from_serial(serial, y, m, d);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
  return buf;
}

std::string normalize(std::string_view text, std::string_view format) { return to_iso(parse_serial(text, format)); }

}  // namespace fq::dates
