#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "retropredict/util.hpp"

namespace retro {

// Calendar days are plain integers counted from 1970-01-01; all date
// arithmetic in the pipeline is whole-day.
using Day = std::int32_t;

namespace detail {

// Howard Hinnant's civil-date algorithms (public domain).
inline std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y = static_cast<int>(yy + (m <= 2));
}

}  // namespace detail

inline Day make_day(int year, unsigned month, unsigned day) {
    return static_cast<Day>(detail::days_from_civil(year, month, day));
}

// Accepts strict ISO-8601 calendar dates (YYYY-MM-DD).
inline Day parse_iso_date(std::string_view s) {
    auto fail = [&] { throw ParseError("invalid ISO date: '" + std::string(s) + "'"); };
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') fail();
    auto digits = [&](std::size_t pos, std::size_t len) {
        int v = 0;
        for (std::size_t i = pos; i < pos + len; ++i) {
            if (s[i] < '0' || s[i] > '9') fail();
            v = v * 10 + (s[i] - '0');
        }
        return v;
    };
    int y = digits(0, 4);
    int m = digits(5, 2);
    int d = digits(8, 2);
    if (m < 1 || m > 12 || d < 1 || d > 31) fail();
    Day r = make_day(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
    // Round-trip rejects impossible combinations like Feb 30.
    int ry;
    unsigned rm, rd;
    detail::civil_from_days(r, ry, rm, rd);
    if (ry != y || static_cast<int>(rm) != m || static_cast<int>(rd) != d) fail();
    return r;
}

inline std::string format_iso_date(Day day) {
    int y;
    unsigned m, d;
    detail::civil_from_days(day, y, m, d);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", y, m, d);
    return buf;
}

}  // namespace retro
