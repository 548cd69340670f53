#pragma once

// UTC instants: ISO 8601 parsing/formatting and calendar truncation.

#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

#include "cordiet/error.hpp"

namespace cordiet {

using Instant = std::chrono::sys_seconds;

enum class Granularity { hour, day, week, month, year };

inline Granularity parse_granularity(std::string_view s) {
  if (s == "hour") return Granularity::hour;
  if (s == "day") return Granularity::day;
  if (s == "week") return Granularity::week;
  if (s == "month") return Granularity::month;
  if (s == "year") return Granularity::year;
  throw ConfigError("unknown granularity: " + std::string(s));
}

inline const char* to_string(Granularity g) {
  switch (g) {
    case Granularity::hour: return "hour";
    case Granularity::day: return "day";
    case Granularity::week: return "week";
    case Granularity::month: return "month";
    case Granularity::year: return "year";
  }
  return "?";
}

namespace detail {

inline bool read_int(std::string_view s, std::size_t& pos, int width, int& out) {
  if (pos + static_cast<std::size_t>(width) > s.size()) return false;
  int v = 0;
  for (int i = 0; i < width; ++i) {
    char c = s[pos + static_cast<std::size_t>(i)];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  pos += static_cast<std::size_t>(width);
  out = v;
  return true;
}

}  // namespace detail

// Accepts YYYY-MM-DD, optionally followed by THH:MM[:SS[.fraction]] and a
// zone designator (Z or +HH:MM / -HH:MM). A missing zone means UTC.
// Fractional seconds are truncated.
inline std::optional<Instant> parse_iso8601(std::string_view s) {
  using namespace std::chrono;
  std::size_t p = 0;
  int y, mo, d, h = 0, mi = 0, sec = 0;
  if (!detail::read_int(s, p, 4, y) || p >= s.size() || s[p++] != '-' ||
      !detail::read_int(s, p, 2, mo) || p >= s.size() || s[p++] != '-' ||
      !detail::read_int(s, p, 2, d))
    return std::nullopt;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  int offset_minutes = 0;
  if (p < s.size()) {
    if (s[p] != 'T' && s[p] != 't' && s[p] != ' ') return std::nullopt;
    ++p;
    if (!detail::read_int(s, p, 2, h) || p >= s.size() || s[p++] != ':' || !detail::read_int(s, p, 2, mi))
      return std::nullopt;
    if (p < s.size() && s[p] == ':') {
      ++p;
      if (!detail::read_int(s, p, 2, sec)) return std::nullopt;
      if (p < s.size() && (s[p] == '.' || s[p] == ',')) {
        ++p;
        std::size_t start = p;
        while (p < s.size() && s[p] >= '0' && s[p] <= '9') ++p;
        if (p == start) return std::nullopt;
      }
    }
    if (h > 23 || mi > 59 || sec > 60) return std::nullopt;
    if (p < s.size()) {
      if (s[p] == 'Z' || s[p] == 'z') {
        ++p;
      } else if (s[p] == '+' || s[p] == '-') {
        int sign = s[p] == '-' ? -1 : 1;
        ++p;
        int oh, om = 0;
        if (!detail::read_int(s, p, 2, oh)) return std::nullopt;
        if (p < s.size() && s[p] == ':') ++p;
        if (p < s.size() && !detail::read_int(s, p, 2, om)) return std::nullopt;
        if (oh > 23 || om > 59) return std::nullopt;
        offset_minutes = sign * (oh * 60 + om);
      } else {
        return std::nullopt;
      }
    }
  }
  if (p != s.size()) return std::nullopt;
  auto t = sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec} - minutes{offset_minutes};
  return time_point_cast<seconds>(t);
}

inline std::string format_iso8601(Instant t) {
  using namespace std::chrono;
  auto dp = floor<days>(t);
  year_month_day ymd{dp};
  hh_mm_ss hms{t - dp};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

// Weeks start on Monday.
inline Instant truncate(Instant t, Granularity g) {
  using namespace std::chrono;
  auto dp = floor<days>(t);
  switch (g) {
    case Granularity::hour: return floor<hours>(t);
    case Granularity::day: return Instant{dp};
    case Granularity::week: {
      weekday wd{dp};
      auto since_monday = (wd - Monday).count();
      return Instant{dp - days{since_monday}};
    }
    case Granularity::month: {
      year_month_day ymd{dp};
      return Instant{sys_days{ymd.year() / ymd.month() / 1}};
    }
    case Granularity::year: {
      year_month_day ymd{dp};
      return Instant{sys_days{ymd.year() / January / 1}};
    }
  }
  return t;
}

// 0 = Sunday .. 6 = Saturday
inline unsigned weekday_index(Instant t) {
  using namespace std::chrono;
  return weekday{floor<days>(t)}.c_encoding();
}

inline int hour_of_day(Instant t) {
  using namespace std::chrono;
  auto dp = floor<days>(t);
  return static_cast<int>(duration_cast<hours>(t - dp).count());
}

}  // namespace cordiet
