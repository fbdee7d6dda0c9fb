#include "dated/common/date.hpp"

#include <charconv>
#include <cstdio>

namespace dated {
namespace {

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
  static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && is_leap(y) ? 29 : kDays[m - 1];
}

bool parse_fixed(std::string_view s, int& out) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool in_document_range(const Date& d) {
  return d >= kMinDocumentDate && d <= kMaxDocumentDate;
}

}  // namespace

// Civil-from-days / days-from-civil after H. Hinnant.
int64_t Date::days_since_epoch() const {
  const int64_t y = year - (month <= 2 ? 1 : 0);
  const int64_t era = (y >= 0 ? y : y - 399) / 400;
  const int64_t yoe = y - era * 400;
  const int64_t mp = (month + 9) % 12;
  const int64_t doy = (153 * mp + 2) / 5 + day - 1;
  const int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + doe - 719468;
}

Date Date::from_days_since_epoch(int64_t z) {
  z += 719468;
  const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const int64_t doe = z - era * 146097;
  const int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const int64_t mp = (5 * doy + 2) / 153;
  const int d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  const int m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
  const int y = static_cast<int>(yoe + era * 400 + (m <= 2 ? 1 : 0));
  return Date{y, m, d};
}

bool Date::is_valid() const {
  return month >= 1 && month <= 12 && day >= 1 &&
         day <= days_in_month(year, month);
}

std::string Date::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
  return buf;
}

std::optional<Date> date_from_epoch_seconds(int64_t seconds) {
  int64_t days = seconds / 86400;
  if (seconds % 86400 < 0) --days;
  Date d = Date::from_days_since_epoch(days);
  if (!in_document_range(d)) return std::nullopt;
  return d;
}

std::optional<Date> parse_date(std::string_view text) {
  if (text.size() >= 10 && text[4] == '-' && text[7] == '-') {
    Date d;
    if (!parse_fixed(text.substr(0, 4), d.year) ||
        !parse_fixed(text.substr(5, 2), d.month) ||
        !parse_fixed(text.substr(8, 2), d.day)) {
      return std::nullopt;
    }
    if (text.size() > 10 && text[10] != 'T' && text[10] != ' ') {
      return std::nullopt;
    }
    if (!d.is_valid() || !in_document_range(d)) return std::nullopt;
    return d;
  }
  // Epoch seconds, optionally negative.
  std::string_view digits = text;
  bool negative = false;
  if (!digits.empty() && digits.front() == '-') {
    negative = true;
    digits.remove_prefix(1);
  }
  int64_t value = 0;
  if (digits.empty()) return std::nullopt;
  for (char c : digits) {
    if (c < '0' || c > '9') return std::nullopt;
  }
  auto [ptr, ec] =
      std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) {
    return std::nullopt;
  }
  return date_from_epoch_seconds(negative ? -value : value);
}

std::optional<Quarter> Quarter::parse(std::string_view label) {
  if (label.size() != 6 || label[4] != 'Q') return std::nullopt;
  Quarter out;
  if (!parse_fixed(label.substr(0, 4), out.year) ||
      !parse_fixed(label.substr(5, 1), out.q) || out.q < 1 || out.q > 4) {
    return std::nullopt;
  }
  return out;
}

Quarter Quarter::plus(int quarters) const {
  int idx = year * 4 + (q - 1) + quarters;
  int y = idx >= 0 ? idx / 4 : (idx - 3) / 4;
  return Quarter{y, idx - y * 4 + 1};
}

std::string Quarter::label() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04dQ%d", year, q);
  return buf;
}

}  // namespace dated
