#pragma once

#include "iotaudit/core/bytes.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace iotaudit::pcap::tls {

namespace content {
inline constexpr std::uint8_t kChangeCipherSpec = 20;
inline constexpr std::uint8_t kAlert = 21;
inline constexpr std::uint8_t kHandshake = 22;
inline constexpr std::uint8_t kApplicationData = 23;
} // namespace content

namespace hs {
inline constexpr std::uint8_t kClientHello = 1;
inline constexpr std::uint8_t kServerHello = 2;
inline constexpr std::uint8_t kCertificate = 11;
inline constexpr std::uint8_t kServerKeyExchange = 12;
inline constexpr std::uint8_t kServerHelloDone = 14;
} // namespace hs

namespace version {
inline constexpr std::uint16_t kSsl2 = 0x0002;
inline constexpr std::uint16_t kSsl3 = 0x0300;
inline constexpr std::uint16_t kTls10 = 0x0301;
inline constexpr std::uint16_t kTls11 = 0x0302;
inline constexpr std::uint16_t kTls12 = 0x0303;
inline constexpr std::uint16_t kTls13 = 0x0304;
} // namespace version

struct Record {
    std::uint8_t type = 0;
    std::uint16_t version = 0;
    ByteView body;
};

struct RecordScan {
    std::vector<Record> records;
    bool sslv2_framing = false;  // stream opens with an SSLv2-style 2-byte header
    std::uint8_t sslv2_msg_type = 0;
    std::uint16_t sslv2_version = 0;
    bool truncated = false;      // the last record ran past the captured bytes
};

/// True when the stream starts with something shaped like an SSL/TLS record.
bool has_record_framing(ByteView stream);

/// Walks records from the start of one direction of a stream. Stops at the
/// first header that is not a plausible record.
RecordScan scan_records(ByteView stream);

struct HandshakeMessage {
    std::uint8_t type = 0;
    Bytes body;
};

/// Reassembles plaintext handshake messages (they may span records). Stops
/// at ChangeCipherSpec, after which handshake records are encrypted.
std::vector<HandshakeMessage> handshake_messages(const RecordScan& scan);

struct ClientHello {
    std::uint16_t legacy_version = 0;
    std::vector<std::uint16_t> cipher_suites;
    std::optional<std::string> sni;
    std::vector<std::uint16_t> supported_versions;
};

struct ServerHello {
    std::uint16_t legacy_version = 0;
    std::uint16_t cipher_suite = 0;
    std::optional<std::uint16_t> selected_version; // supported_versions extension

    /// The version actually in use: supported_versions wins over the legacy field.
    std::uint16_t negotiated_version() const { return selected_version.value_or(legacy_version); }
};

std::optional<ClientHello> parse_client_hello(ByteView body);
std::optional<ServerHello> parse_server_hello(ByteView body);
/// TLS <= 1.2 Certificate message: a list of DER certificates, leaf first.
std::optional<std::vector<Bytes>> parse_certificate_list(ByteView body);

/// Pre-shared-key cipher suites (RFC 4279, 5487, 5489, 6655, 7905, 8442 families).
bool is_psk_cipher_suite(std::uint16_t suite);

/// Everything the audit needs from one TLS conversation.
struct SessionSummary {
    bool record_layer = false;
    bool sslv2_framing = false;
    std::optional<std::uint16_t> sslv2_server_version;
    std::optional<ClientHello> client_hello;
    std::optional<ServerHello> server_hello;
    bool certificate_message = false;
    std::vector<Bytes> certificate_chain;
    bool certificate_parse_error = false;
    std::size_t application_records = 0;
    Bytes application_data; // record bodies, both directions, up to the cap
};

/// Summarizes a conversation given both directions; works out which side
/// is the client by looking for the ClientHello.
SessionSummary summarize_session(ByteView forward, ByteView reverse, std::size_t application_cap = 16 * 1024);

// Builders for fixtures and scripted clients.
Bytes build_record(std::uint8_t type, std::uint16_t version, ByteView body);
Bytes build_handshake(std::uint8_t type, ByteView body);
Bytes build_client_hello(const std::string& sni, const std::vector<std::uint16_t>& suites,
                         const std::vector<std::uint16_t>& supported_versions = {});
Bytes build_server_hello(std::uint16_t legacy_version, std::uint16_t suite,
                         std::optional<std::uint16_t> supported_version = std::nullopt);
Bytes build_certificate(const std::vector<Bytes>& chain);
Bytes build_alert(std::uint8_t level, std::uint8_t description, std::uint16_t record_version = version::kTls12);

} // namespace iotaudit::pcap::tls
