#pragma once

#include "iotaudit/core/bytes.hpp"
#include "iotaudit/core/ip.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace iotaudit::pcap::dns {

namespace rrtype {
inline constexpr std::uint16_t kA = 1;
inline constexpr std::uint16_t kCname = 5;
inline constexpr std::uint16_t kAaaa = 28;
inline constexpr std::uint16_t kDnskey = 48;
} // namespace rrtype

struct Question {
    std::string name;
    std::uint16_t type = 0;
    std::uint16_t klass = 0;
};

struct ResourceRecord {
    std::string name;
    std::uint16_t type = 0;
    std::uint16_t klass = 0;
    std::uint32_t ttl = 0;
    std::optional<IpAddress> address; // A / AAAA
    std::string target;               // CNAME
    std::size_t rdata_length = 0;
};

struct Message {
    std::uint16_t id = 0;
    bool is_response = false;
    std::uint8_t rcode = 0;
    std::vector<Question> questions;
    std::vector<ResourceRecord> answers;
    std::vector<ResourceRecord> authority;
    std::vector<ResourceRecord> additional;

    bool has_record_type(std::uint16_t type) const;
};

/// Parses one DNS message (RFC 1035 wire format with name compression).
/// Names are lower-cased without the trailing dot. nullopt when malformed.
std::optional<Message> parse_message(ByteView wire);

/// Splits a TCP DNS stream into length-prefixed messages.
std::vector<ByteView> split_tcp_stream(ByteView stream);

/// Builds a DNS message; used by fixtures and the simulated probe fleet.
Bytes encode_message(const Message& msg);

} // namespace iotaudit::pcap::dns
