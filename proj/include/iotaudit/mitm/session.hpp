#pragma once

#include "iotaudit/core/bytes.hpp"
#include "iotaudit/core/json.hpp"
#include "iotaudit/core/time.hpp"

#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace iotaudit::mitm {

enum class EventKind {
    Open,              // device connection accepted
    ClientHello,       // detail: SNI
    UpstreamConnected, // genuine chain verified
    UpstreamFailed,    // detail: reason
    ForgedCertificate, // detail: forged leaf fingerprint
    HandshakeSent,     // handshake message to the device; detail: type
    HandshakeReceived, // from the device
    AlertFromDevice,
    AlertToDevice,
    HandshakeComplete,
    DeviceData,      // plaintext read from the device; bytes
    RelayedUpstream, // plaintext written upstream; bytes
    ServerData,      // plaintext read from upstream
    RelayedToDevice,
    DeviceClosed,    // detail says whether during the handshake
    UpstreamClosed,
    ProbeClosed,
    NonTlsRelay, // bytes relayed without interception
};

std::string_view to_string(EventKind k);
std::optional<EventKind> parse_event_kind(std::string_view text);

struct TranscriptEvent {
    Timestamp t;
    EventKind kind = EventKind::Open;
    std::string detail;
    std::uint64_t bytes = 0;
    int alert_level = -1;
    int alert_code = -1;

    Json to_json() const;
    static TranscriptEvent from_json(const Json& j);
};

/// One intercepted device connection.
struct ProbeSession {
    std::string device_id;
    std::string device_ip;
    std::string host; // SNI, or the original destination IP without one
    std::string upstream_ip;
    std::uint16_t port = 0;
    bool tls = true;
    Timestamp start, end;
    std::vector<TranscriptEvent> transcript;
    Bytes device_plaintext; // capped copies for API extraction
    Bytes server_plaintext;

    std::string endpoint() const { return host + ":" + std::to_string(port); }
    bool handshake_completed() const;
    bool has(EventKind k) const;
    std::uint64_t total(EventKind k) const;
    /// Bytes written upstream equal bytes read from the device, and the same
    /// in the other direction.
    bool relay_faithful() const;

    /// Plaintext is only included when asked for.
    Json to_json(bool include_plaintext = false) const;
    static ProbeSession from_json(const Json& j);
};

/// Appends events with strictly increasing timestamps; safe across threads.
class TranscriptWriter {
public:
    explicit TranscriptWriter(ProbeSession& s) : s_(s) {}
    void add(EventKind kind, std::string detail = {}, std::uint64_t bytes = 0, int level = -1, int code = -1);

private:
    ProbeSession& s_;
    std::mutex mu_;
};

std::string sessions_jsonl(const std::vector<ProbeSession>& sessions, bool include_plaintext = false);
std::vector<ProbeSession> parse_sessions_jsonl(std::string_view text);

/// RFC 8446 alert description name, or "alert_<n>".
std::string alert_name(int code);

} // namespace iotaudit::mitm
