#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace iotaudit {

/// UTC instant with microsecond resolution.
struct Timestamp {
    std::int64_t micros = 0;

    static constexpr Timestamp from_seconds(double s) { return {static_cast<std::int64_t>(s * 1e6)}; }
    static constexpr Timestamp from_millis(std::int64_t ms) { return {ms * 1000}; }

    constexpr double seconds() const { return static_cast<double>(micros) / 1e6; }
    constexpr std::int64_t millis() const { return micros >= 0 ? micros / 1000 : -((-micros + 999) / 1000); }

    friend constexpr auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

/// Duration helpers kept as plain microsecond counts.
constexpr std::int64_t kMicrosPerSecond = 1'000'000;

/// Formats as `YYYY-MM-DDTHH:MM:SS.mmmZ` (millisecond precision, truncating).
std::string format_iso8601_ms(Timestamp t);

/// Parses `YYYY-MM-DDTHH:MM:SS[.fff]Z`; also accepts a `+00:00` suffix.
/// Throws ParseError on anything else.
Timestamp parse_iso8601(std::string_view text);

/// Current wall-clock time.
Timestamp now_utc();

} // namespace iotaudit
