#include "iotaudit/core/time.hpp"

#include "iotaudit/core/error.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>

namespace iotaudit {

namespace {

// Days from 1970-01-01 for a proleptic Gregorian date (H. Hinnant's algorithm).
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp < 10 ? mp + 3 : mp - 9;
    y += m <= 2;
}

int read_int(std::string_view s, std::size_t pos, std::size_t len) {
    if (pos + len > s.size()) throw ParseError("timestamp too short: '" + std::string(s) + "'");
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, v);
    if (ec != std::errc{} || ptr != s.data() + pos + len)
        throw ParseError("bad digits in timestamp '" + std::string(s) + "'");
    return v;
}

void expect_char(std::string_view s, std::size_t pos, char c) {
    if (pos >= s.size() || s[pos] != c) throw ParseError("malformed timestamp '" + std::string(s) + "'");
}

} // namespace

std::string format_iso8601_ms(Timestamp t) {
    std::int64_t secs = t.micros / kMicrosPerSecond;
    std::int64_t rem = t.micros % kMicrosPerSecond;
    if (rem < 0) {
        rem += kMicrosPerSecond;
        --secs;
    }
    std::int64_t days = secs / 86400;
    std::int64_t sod = secs % 86400;
    if (sod < 0) {
        sod += 86400;
        --days;
    }
    std::int64_t y;
    unsigned m, d;
    civil_from_days(days, y, m, d);
    char buf[40];
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lld.%03lldZ", static_cast<long long>(y), m, d,
                  static_cast<long long>(sod / 3600), static_cast<long long>((sod / 60) % 60),
                  static_cast<long long>(sod % 60), static_cast<long long>(rem / 1000));
    return buf;
}

Timestamp parse_iso8601(std::string_view s) {
    const int year = read_int(s, 0, 4);
    expect_char(s, 4, '-');
    const int mon = read_int(s, 5, 2);
    expect_char(s, 7, '-');
    const int day = read_int(s, 8, 2);
    expect_char(s, 10, 'T');
    const int hh = read_int(s, 11, 2);
    expect_char(s, 13, ':');
    const int mm = read_int(s, 14, 2);
    expect_char(s, 16, ':');
    const int ss = read_int(s, 17, 2);
    if (mon < 1 || mon > 12 || day < 1 || day > 31 || hh > 23 || mm > 59 || ss > 60)
        throw ParseError("out-of-range field in timestamp '" + std::string(s) + "'");

    std::size_t pos = 19;
    std::int64_t frac_us = 0;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        std::size_t digits = 0;
        std::int64_t scale = 100000;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
            if (digits < 6) {
                frac_us += (s[pos] - '0') * scale;
                scale /= 10;
            }
            ++digits;
            ++pos;
        }
        if (digits == 0) throw ParseError("empty fraction in timestamp '" + std::string(s) + "'");
    }
    const std::string_view zone = s.substr(pos);
    if (zone != "Z" && zone != "+00:00")
        throw ParseError("timestamp must be UTC ('Z'): '" + std::string(s) + "'");

    const std::int64_t days = days_from_civil(year, static_cast<unsigned>(mon), static_cast<unsigned>(day));
    const std::int64_t secs = days * 86400 + hh * 3600 + mm * 60 + ss;
    return Timestamp{secs * kMicrosPerSecond + frac_us};
}

Timestamp now_utc() {
    using namespace std::chrono;
    return Timestamp{duration_cast<microseconds>(system_clock::now().time_since_epoch()).count()};
}

} // namespace iotaudit
