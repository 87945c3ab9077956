#include "iotaudit/core/ip.hpp"

#include "iotaudit/core/error.hpp"

#include <arpa/inet.h>
#include <cstdio>
#include <cstring>

namespace iotaudit {

IpAddress IpAddress::v4(std::uint32_t host_order) {
    IpAddress a;
    a.family_ = Family::V4;
    a.bytes_[0] = static_cast<std::uint8_t>(host_order >> 24);
    a.bytes_[1] = static_cast<std::uint8_t>(host_order >> 16);
    a.bytes_[2] = static_cast<std::uint8_t>(host_order >> 8);
    a.bytes_[3] = static_cast<std::uint8_t>(host_order);
    return a;
}

IpAddress IpAddress::v4(const std::uint8_t* p) {
    IpAddress a;
    a.family_ = Family::V4;
    std::memcpy(a.bytes_.data(), p, 4);
    return a;
}

IpAddress IpAddress::v6(const std::uint8_t* p) {
    IpAddress a;
    a.family_ = Family::V6;
    std::memcpy(a.bytes_.data(), p, 16);
    return a;
}

std::optional<IpAddress> IpAddress::parse(std::string_view text) {
    const std::string s(text);
    std::uint8_t buf[16];
    if (inet_pton(AF_INET, s.c_str(), buf) == 1) return v4(buf);
    if (inet_pton(AF_INET6, s.c_str(), buf) == 1) return v6(buf);
    return std::nullopt;
}

IpAddress IpAddress::require(std::string_view text) {
    if (auto a = parse(text)) return *a;
    throw ParseError("invalid IP address '" + std::string(text) + "'");
}

std::uint32_t IpAddress::v4_host_order() const {
    return (std::uint32_t{bytes_[0]} << 24) | (std::uint32_t{bytes_[1]} << 16) | (std::uint32_t{bytes_[2]} << 8) |
           bytes_[3];
}

std::string IpAddress::to_string() const {
    char buf[INET6_ADDRSTRLEN];
    if (is_v4())
        inet_ntop(AF_INET, bytes_.data(), buf, sizeof buf);
    else
        inet_ntop(AF_INET6, bytes_.data(), buf, sizeof buf);
    return buf;
}

bool IpAddress::is_local() const {
    const auto& b = bytes_;
    if (is_v4()) {
        if (b[0] == 10 || b[0] == 127 || b[0] == 0) return true;
        if (b[0] == 172 && (b[1] & 0xF0) == 16) return true;
        if (b[0] == 192 && b[1] == 168) return true;
        if (b[0] == 169 && b[1] == 254) return true;
        if (b[0] == 100 && (b[1] & 0xC0) == 64) return true; // CGNAT 100.64/10
        if (b[0] >= 224) return true;                        // multicast, reserved, broadcast
        return false;
    }
    static constexpr std::uint8_t kZero[16] = {};
    if (std::memcmp(b.data(), kZero, 15) == 0 && (b[15] == 0 || b[15] == 1)) return true; // :: and ::1
    if (b[0] == 0xFF) return true;                                                        // multicast
    if (b[0] == 0xFE && (b[1] & 0xC0) == 0x80) return true;                               // fe80::/10
    if ((b[0] & 0xFE) == 0xFC) return true;                                               // fc00::/7
    // IPv4-mapped: judge the embedded address.
    static constexpr std::uint8_t kMapped[12] = {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0xFF, 0xFF};
    if (std::memcmp(b.data(), kMapped, 12) == 0) return v4(b.data() + 12).is_local();
    return false;
}

std::optional<MacAddress> MacAddress::parse(std::string_view text) {
    MacAddress m;
    unsigned v[6];
    const std::string s(text);
    char sep1, sep2, sep3, sep4, sep5;
    if (std::sscanf(s.c_str(), "%2x%c%2x%c%2x%c%2x%c%2x%c%2x", &v[0], &sep1, &v[1], &sep2, &v[2], &sep3, &v[3], &sep4,
                    &v[4], &sep5, &v[5]) != 11)
        return std::nullopt;
    for (char c : {sep1, sep2, sep3, sep4, sep5})
        if (c != ':' && c != '-') return std::nullopt;
    for (int i = 0; i < 6; ++i) m.bytes[i] = static_cast<std::uint8_t>(v[i]);
    return m;
}

std::string MacAddress::to_string() const {
    char buf[18];
    std::snprintf(buf, sizeof buf, "%02x:%02x:%02x:%02x:%02x:%02x", bytes[0], bytes[1], bytes[2], bytes[3], bytes[4],
                  bytes[5]);
    return buf;
}

} // namespace iotaudit
