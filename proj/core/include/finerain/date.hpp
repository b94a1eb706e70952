// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include "finerain/error.hpp"

namespace finerain {

// Proleptic Gregorian civil date. No time-of-day, no timezones.
struct Date {
    int year = 1970;
    int month = 1;  // 1..12
    int day = 1;    // 1..31

    bool operator==(const Date&) const = default;
    auto operator<=>(const Date&) const = default;
};

// Days since 1970-01-01 (negative before). Howard Hinnant's civil algorithm.
inline std::int64_t to_days(const Date& d) {
    std::int64_t y = d.year;
    const std::int64_t m = d.month;
    const std::int64_t dd = d.day;
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const std::int64_t yoe = y - era * 400;
    const std::int64_t doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + dd - 1;
    const std::int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + doe - 719468;
}

inline Date from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const std::int64_t doe = z - era * 146097;
    const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = yoe + era * 400;
    const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const std::int64_t mp = (5 * doy + 2) / 153;
    const std::int64_t dd = doy - (153 * mp + 2) / 5 + 1;
    const std::int64_t m = mp + (mp < 10 ? 3 : -9);
    return Date{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(dd)};
}

inline Date next_day(const Date& d) { return from_days(to_days(d) + 1); }

inline bool is_valid(const Date& d) {
    if (d.month < 1 || d.month > 12 || d.day < 1) return false;
    return from_days(to_days(d)) == d;
}

inline std::string to_iso(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", d.year, d.month, d.day);
    return buf;
}

inline Date parse_iso_date(const std::string& s) {
    int y = 0, m = 0, dd = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%d", &y, &m, &dd) != 3)
        throw InvalidArgument("bad ISO date: '" + s + "'");
    Date d{y, m, dd};
    if (!is_valid(d)) throw InvalidArgument("invalid calendar date: '" + s + "'");
    return d;
}

// Monsoon window used throughout: May-September; everything else is non-monsoon.
inline bool is_monsoon_month(int month) { return month >= 5 && month <= 9; }

// Standard meteorological seasons by month triplet.
enum class Season { DJF, MAM, JJA, SON };

inline Season season_of(int month) {
    if (month == 12 || month <= 2) return Season::DJF;
    if (month <= 5) return Season::MAM;
    if (month <= 8) return Season::JJA;
    return Season::SON;
}

inline const char* season_name(Season s) {
    switch (s) {
        case Season::DJF: return "DJF";
        case Season::MAM: return "MAM";
        case Season::JJA: return "JJA";
        default: return "SON";
    }
}

}  // namespace finerain
