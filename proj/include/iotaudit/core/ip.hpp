#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace iotaudit {

/// IPv4 or IPv6 address. IPv4 is stored in the first four bytes.
class IpAddress {
public:
    enum class Family : std::uint8_t { V4 = 4, V6 = 6 };

    IpAddress() = default;

    static IpAddress v4(std::uint32_t host_order);
    static IpAddress v4(const std::uint8_t* network_order);
    static IpAddress v6(const std::uint8_t* network_order);

    /// Accepts dotted-quad and RFC 5952 text; nullopt on failure.
    static std::optional<IpAddress> parse(std::string_view text);
    /// Throws ParseError on failure.
    static IpAddress require(std::string_view text);

    Family family() const { return family_; }
    bool is_v4() const { return family_ == Family::V4; }
    const std::array<std::uint8_t, 16>& bytes() const { return bytes_; }
    std::uint32_t v4_host_order() const;

    std::string to_string() const;

    /// Loopback, private (RFC 1918 / ULA), link-local, multicast, broadcast, unspecified or CGNAT.
    /// These never leave the home network and are excluded from destination analysis.
    bool is_local() const;

    friend auto operator<=>(const IpAddress&, const IpAddress&) = default;

private:
    Family family_ = Family::V4;
    std::array<std::uint8_t, 16> bytes_{};
};

/// 48-bit Ethernet MAC.
struct MacAddress {
    std::array<std::uint8_t, 6> bytes{};

    static std::optional<MacAddress> parse(std::string_view text);
    std::string to_string() const;
    friend auto operator<=>(const MacAddress&, const MacAddress&) = default;
};

} // namespace iotaudit
