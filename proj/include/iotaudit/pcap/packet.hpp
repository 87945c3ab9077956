#pragma once

#include "iotaudit/core/bytes.hpp"
#include "iotaudit/core/ip.hpp"
#include "iotaudit/core/time.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace iotaudit::pcap {

enum class Transport : std::uint8_t { Tcp, Udp, Icmp, Other };

std::string_view to_string(Transport t);

namespace tcpflag {
inline constexpr std::uint8_t kFin = 0x01;
inline constexpr std::uint8_t kSyn = 0x02;
inline constexpr std::uint8_t kRst = 0x04;
inline constexpr std::uint8_t kPsh = 0x08;
inline constexpr std::uint8_t kAck = 0x10;
} // namespace tcpflag

struct TcpInfo {
    std::uint32_t seq = 0;
    std::uint32_t ack = 0;
    std::uint8_t flags = 0;
};

/// One decoded IP packet. Ports are present iff transport is TCP or UDP.
struct PacketRecord {
    Timestamp timestamp;
    std::optional<MacAddress> src_mac, dst_mac;
    IpAddress src_ip, dst_ip;
    std::optional<std::uint16_t> src_port, dst_port;
    Transport transport = Transport::Other;
    std::uint8_t ip_protocol = 0;
    std::optional<TcpInfo> tcp;
    Bytes payload;
    std::uint32_t wire_length = 0;
};

enum class DecodeStatus { Ok, NotIp, Malformed };

struct DecodeResult {
    DecodeStatus status = DecodeStatus::Malformed;
    PacketRecord packet;
    std::string reason;
};

/// Strips the link layer and decodes IPv4/IPv6 + TCP/UDP/ICMP.
/// Throws ParseError for link types that are not supported.
DecodeResult decode_frame(std::uint32_t link_type, ByteView frame, std::uint32_t wire_length, Timestamp ts);

bool is_supported_link_type(std::uint32_t link_type);

struct ParsedCapture {
    std::string device_id;
    std::vector<PacketRecord> packets; // file order
    std::size_t malformed_skipped = 0;
    std::size_t non_ip_skipped = 0;
    std::vector<std::string> warnings;
};

/// Reads a pcap/pcapng file into packets. Malformed packets are counted and
/// skipped; an unknown link type is a hard error naming the type.
ParsedCapture parse_capture(const std::filesystem::path& path, std::string device_id);
ParsedCapture parse_capture_bytes(Bytes data, std::string device_id);

} // namespace iotaudit::pcap
