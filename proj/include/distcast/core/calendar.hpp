#pragma once

#include <charconv>
#include <compare>
#include <cstdio>
#include <string>
#include <string_view>

#include "distcast/core/errors.hpp"

namespace distcast {

/// Calendar month. Ordering and arithmetic go through a linear month index.
struct YearMonth {
  int year = 1970;
  int month = 1;  // 1..12

  constexpr int index() const { return year * 12 + (month - 1); }
  static constexpr YearMonth from_index(int idx) {
    int y = idx / 12;
    int m = idx % 12;
    if (m < 0) {
      m += 12;
      --y;
    }
    return {y, m + 1};
  }
  constexpr YearMonth plus(int months) const { return from_index(index() + months); }
  constexpr bool valid() const { return month >= 1 && month <= 12; }

  friend constexpr bool operator==(const YearMonth&, const YearMonth&) = default;
  friend constexpr auto operator<=>(const YearMonth& a, const YearMonth& b) {
    return a.index() <=> b.index();
  }

  std::string to_string() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
    return buf;
  }

  /// Parses "YYYY-MM".
  static YearMonth parse(std::string_view text) {
    const auto dash = text.find('-');
    YearMonth ym;
    if (dash == std::string_view::npos ||
        std::from_chars(text.data(), text.data() + dash, ym.year).ec != std::errc{} ||
        std::from_chars(text.data() + dash + 1, text.data() + text.size(), ym.month).ec !=
            std::errc{} ||
        !ym.valid()) {
      throw InputError("invalid year-month '" + std::string(text) + "' (expected YYYY-MM)");
    }
    return ym;
  }
};

/// Months between two calendar months (b - a).
constexpr int months_between(const YearMonth& a, const YearMonth& b) { return b.index() - a.index(); }

constexpr bool is_leap_year(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

constexpr int days_in_month(int year, int month) {
  constexpr int days[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return month == 2 && is_leap_year(year) ? 29 : days[month - 1];
}

/// Calendar day used by daily weather records.
struct Date {
  int year = 1970;
  int month = 1;
  int day = 1;

  friend constexpr bool operator==(const Date&, const Date&) = default;
  friend constexpr auto operator<=>(const Date&, const Date&) = default;

  constexpr YearMonth year_month() const { return {year, month}; }

  std::string to_string() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
    return buf;
  }

  /// Parses ISO "YYYY-MM-DD".
  static Date parse(std::string_view text) {
    Date d;
    int* parts[3] = {&d.year, &d.month, &d.day};
    std::size_t pos = 0;
    for (int k = 0; k < 3; ++k) {
      const auto end = k < 2 ? text.find('-', pos) : text.size();
      if (end == std::string_view::npos ||
          std::from_chars(text.data() + pos, text.data() + end, *parts[k]).ec != std::errc{}) {
        throw InputError("invalid date '" + std::string(text) + "' (expected YYYY-MM-DD)");
      }
      pos = end + 1;
    }
    if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > days_in_month(d.year, d.month)) {
      throw InputError("invalid date '" + std::string(text) + "'");
    }
    return d;
  }
};

}  // namespace distcast
