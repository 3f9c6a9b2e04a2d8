#pragma once

#include <charconv>
#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace topicdyn {

using Instant = std::chrono::sys_seconds;

namespace detail {
inline bool parse_int(std::string_view s, int& out) {
    if (s.empty())
        return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}
} // namespace detail

/// Parses RFC 3339 ("2020-03-22T10:15:00Z", "...+03:00", fractional seconds
/// truncated) and bare dates ("2020-03-22", midnight UTC).
inline std::optional<Instant> parse_rfc3339(std::string_view s) {
    using namespace std::chrono;
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
    if (s.size() < 10 || s[4] != '-' || s[7] != '-')
        return std::nullopt;
    if (!detail::parse_int(s.substr(0, 4), y) || !detail::parse_int(s.substr(5, 2), mo) ||
        !detail::parse_int(s.substr(8, 2), d))
        return std::nullopt;
    year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok())
        return std::nullopt;
    if (s.size() == 10)
        return Instant{sys_days{ymd}};

    if (s.size() < 20 || (s[10] != 'T' && s[10] != 't' && s[10] != ' ') || s[13] != ':' || s[16] != ':')
        return std::nullopt;
    if (!detail::parse_int(s.substr(11, 2), h) || !detail::parse_int(s.substr(14, 2), mi) ||
        !detail::parse_int(s.substr(17, 2), se))
        return std::nullopt;
    if (h > 23 || mi > 59 || se > 60)
        return std::nullopt;
    std::size_t pos = 19;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        std::size_t digits = 0;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
            ++pos;
            ++digits;
        }
        if (digits == 0)
            return std::nullopt;
    }
    if (pos >= s.size())
        return std::nullopt;
    int offset_minutes = 0;
    std::string_view tz = s.substr(pos);
    if (tz == "Z" || tz == "z") {
        offset_minutes = 0;
    } else if (tz.size() == 6 && (tz[0] == '+' || tz[0] == '-') && tz[3] == ':') {
        int oh = 0, om = 0;
        if (!detail::parse_int(tz.substr(1, 2), oh) || !detail::parse_int(tz.substr(4, 2), om) || oh > 23 || om > 59)
            return std::nullopt;
        offset_minutes = (oh * 60 + om) * (tz[0] == '-' ? -1 : 1);
    } else {
        return std::nullopt;
    }
    return Instant{sys_days{ymd}} + hours{h} + minutes{mi} + seconds{se} - minutes{offset_minutes};
}

inline std::string format_rfc3339(Instant t) {
    using namespace std::chrono;
    const auto day_point = floor<days>(t);
    const year_month_day ymd{day_point};
    const hh_mm_ss hms{t - day_point};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

} // namespace topicdyn
