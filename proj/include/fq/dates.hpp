#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace fq::dates {

// Days since 1970-01-01 for a proleptic Gregorian civil date.
std::int64_t serial_from_civil(int year, int month, int day);
void civil_from_serial(std::int64_t serial, int& year, int& month, int& day);

// Parses `text` against a strftime-like pattern supporting %Y, %m, %d and
// literal characters.  Throws DataError on mismatch or an invalid date.
std::int64_t parse_serial(std::string_view text, std::string_view format);

// Formats a serial day as ISO-8601 (YYYY-MM-DD).
std::string to_iso(std::int64_t serial);

// Convenience: parse then normalize to ISO-8601.
std::string normalize(std::string_view text, std::string_view format);

}  // namespace fq::dates
