#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace dated {

// Calendar date, UTC, day precision.
struct Date {
  int year = 1970;
  int month = 1;
  int day = 1;

  auto operator<=>(const Date&) const = default;

  // Days since 1970-01-01.
  int64_t days_since_epoch() const;
  static Date from_days_since_epoch(int64_t days);

  bool is_valid() const;
  int quarter() const { return (month - 1) / 3 + 1; }
  std::string to_string() const;  // YYYY-MM-DD
};

// Earliest and latest admissible document dates.
inline constexpr Date kMinDocumentDate{1990, 1, 1};
inline constexpr Date kMaxDocumentDate{2100, 12, 31};

// Accepts "YYYY-MM-DD", an ISO-8601 date-time whose date part is
// "YYYY-MM-DD" (the time part is dropped after validation of its prefix),
// or an integer count of epoch seconds. Returns nullopt when malformed or
// outside [kMinDocumentDate, kMaxDocumentDate].
std::optional<Date> parse_date(std::string_view text);
std::optional<Date> date_from_epoch_seconds(int64_t seconds);

// A model trained for cutoff year Y sees only data dated strictly before
// Y-01-01T00:00:00Z.
struct CutoffSpec {
  int cutoff_year = 0;

  Date boundary() const { return Date{cutoff_year, 1, 1}; }
  bool admits(const Date& d) const { return d < boundary(); }
};

// Calendar quarter, e.g. 2013Q1.
struct Quarter {
  int year = 0;
  int q = 1;  // 1..4

  auto operator<=>(const Quarter&) const = default;

  static Quarter of(const Date& d) { return Quarter{d.year, d.quarter()}; }
  static std::optional<Quarter> parse(std::string_view label);

  // Number of quarters from `origin` to this one.
  int index_from(const Quarter& origin) const {
    return (year - origin.year) * 4 + (q - origin.q);
  }
  Quarter plus(int quarters) const;
  std::string label() const;
};

}  // namespace dated
