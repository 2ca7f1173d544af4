#pragma once

#include <chrono>
#include <compare>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace flightstat {

struct Date {
    int year = 1970;
    int month = 1;
    int day = 1;

    auto operator<=>(const Date&) const = default;

    bool valid() const {
        std::chrono::year_month_day ymd{std::chrono::year{year},
                                        std::chrono::month{static_cast<unsigned>(month)},
                                        std::chrono::day{static_cast<unsigned>(day)}};
        return ymd.ok();
    }

    std::chrono::sys_days sys_days() const {
        return std::chrono::sys_days{std::chrono::year_month_day{
            std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
            std::chrono::day{static_cast<unsigned>(day)}}};
    }

    static Date from_sys_days(std::chrono::sys_days d) {
        std::chrono::year_month_day ymd{d};
        return {static_cast<int>(ymd.year()), static_cast<int>(static_cast<unsigned>(ymd.month())),
                static_cast<int>(static_cast<unsigned>(ymd.day()))};
    }

    Date plus_days(int n) const { return from_sys_days(sys_days() + std::chrono::days{n}); }

    // 1 = Monday ... 7 = Sunday, the on-time dataset convention.
    int day_of_week() const {
        std::chrono::weekday wd{sys_days()};
        return static_cast<int>(wd.iso_encoding());
    }

    std::string iso() const {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
        return buf;
    }

    static std::optional<Date> parse_iso(std::string_view s) {
        if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
        auto digits = [&](std::size_t from, std::size_t len) -> std::optional<int> {
            int v = 0;
            for (std::size_t i = from; i < from + len; ++i) {
                if (s[i] < '0' || s[i] > '9') return std::nullopt;
                v = v * 10 + (s[i] - '0');
            }
            return v;
        };
        auto y = digits(0, 4), m = digits(5, 2), d = digits(8, 2);
        if (!y || !m || !d) return std::nullopt;
        Date out{*y, *m, *d};
        if (!out.valid()) return std::nullopt;
        return out;
    }
};

// Wall-clock time of day, minute resolution.
struct ClockTime {
    int hour = 0;
    int minute = 0;

    auto operator<=>(const ClockTime&) const = default;

    int minutes_since_midnight() const { return hour * 60 + minute; }
    int hhmm() const { return hour * 100 + minute; }

    static std::optional<ClockTime> from_hhmm(int hhmm) {
        if (hhmm < 0 || hhmm >= 2400 || hhmm % 100 >= 60) return std::nullopt;
        return ClockTime{hhmm / 100, hhmm % 100};
    }

    static ClockTime from_minutes(int minutes) {
        minutes = ((minutes % 1440) + 1440) % 1440;
        return {minutes / 60, minutes % 60};
    }

    std::string str() const {
        char buf[8];
        std::snprintf(buf, sizeof buf, "%02d:%02d", hour, minute);
        return buf;
    }

    // Accepts "HH:MM".
    static std::optional<ClockTime> parse(std::string_view s) {
        auto colon = s.find(':');
        if (colon == std::string_view::npos || colon == 0 || colon > 2 || s.size() - colon != 3)
            return std::nullopt;
        int h = 0, m = 0;
        for (std::size_t i = 0; i < colon; ++i) {
            if (s[i] < '0' || s[i] > '9') return std::nullopt;
            h = h * 10 + (s[i] - '0');
        }
        for (std::size_t i = colon + 1; i < s.size(); ++i) {
            if (s[i] < '0' || s[i] > '9') return std::nullopt;
            m = m * 10 + (s[i] - '0');
        }
        if (h > 23 || m > 59) return std::nullopt;
        return ClockTime{h, m};
    }
};

// UTC instant, millisecond resolution. Text form "YYYY-MM-DDTHH:MM:SS.mmmZ".
using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

inline Timestamp now_utc() {
    return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

inline std::string format_timestamp(Timestamp t) {
    const auto day = std::chrono::floor<std::chrono::days>(t);
    const auto ms = (t - day).count();
    const Date d = Date::from_sys_days(day);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02d.%03dZ", d.iso().c_str(), static_cast<int>(ms / 3600000),
                  static_cast<int>(ms / 60000 % 60), static_cast<int>(ms / 1000 % 60), static_cast<int>(ms % 1000));
    return buf;
}

// Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH:MM[:SS[.mmm]]" with optional trailing "Z".
inline std::optional<Timestamp> parse_timestamp(std::string_view s) {
    if (!s.empty() && s.back() == 'Z') s.remove_suffix(1);
    if (s.size() < 10) return std::nullopt;
    auto date = Date::parse_iso(s.substr(0, 10));
    if (!date) return std::nullopt;
    Timestamp t{date->sys_days()};
    if (s.size() == 10) return t;
    if (s[10] != 'T' && s[10] != ' ') return std::nullopt;
    auto rest = s.substr(11);
    auto field = [&](std::size_t at, int max) -> std::optional<int> {
        if (rest.size() < at + 2 || rest[at] < '0' || rest[at] > '9' || rest[at + 1] < '0' || rest[at + 1] > '9')
            return std::nullopt;
        int v = (rest[at] - '0') * 10 + (rest[at + 1] - '0');
        if (v > max) return std::nullopt;
        return v;
    };
    auto h = field(0, 23);
    if (!h || rest.size() < 5 || rest[2] != ':') return std::nullopt;
    auto m = field(3, 59);
    if (!m) return std::nullopt;
    int sec = 0, milli = 0;
    if (rest.size() > 5) {
        if (rest[5] != ':') return std::nullopt;
        auto sv = field(6, 59);
        if (!sv) return std::nullopt;
        sec = *sv;
        if (rest.size() > 8) {
            if (rest[8] != '.' || rest.size() != 12) return std::nullopt;
            for (std::size_t i = 9; i < 12; ++i) {
                if (rest[i] < '0' || rest[i] > '9') return std::nullopt;
                milli = milli * 10 + (rest[i] - '0');
            }
        }
    }
    return t + std::chrono::hours{*h} + std::chrono::minutes{*m} + std::chrono::seconds{sec} +
           std::chrono::milliseconds{milli};
}

enum class Season { winter = 0, spring = 1, summer = 2, fall = 3 };

inline constexpr const char* season_name(Season s) {
    switch (s) {
        case Season::winter: return "winter";
        case Season::spring: return "spring";
        case Season::summer: return "summer";
        case Season::fall: return "fall";
    }
    return "unknown";
}

// Meteorological seasons: Dec-Feb winter, Mar-May spring, Jun-Aug summer, Sep-Nov fall.
// Callers validate the month range.
inline constexpr Season season_of_month_unchecked(int month) {
    switch (month) {
        case 12: case 1: case 2: return Season::winter;
        case 3: case 4: case 5: return Season::spring;
        case 6: case 7: case 8: return Season::summer;
        default: return Season::fall;
    }
}

}  // namespace flightstat
