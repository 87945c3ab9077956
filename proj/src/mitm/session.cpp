#include "iotaudit/mitm/session.hpp"

#include "iotaudit/core/error.hpp"

#include <algorithm>
#include <array>
#include <sstream>

namespace iotaudit::mitm {

namespace {

constexpr std::array<std::pair<EventKind, std::string_view>, 18> kEventNames{{
    {EventKind::Open, "open"},
    {EventKind::ClientHello, "client_hello"},
    {EventKind::UpstreamConnected, "upstream_connected"},
    {EventKind::UpstreamFailed, "upstream_failed"},
    {EventKind::ForgedCertificate, "forged_certificate"},
    {EventKind::HandshakeSent, "handshake_sent"},
    {EventKind::HandshakeReceived, "handshake_received"},
    {EventKind::AlertFromDevice, "alert_from_device"},
    {EventKind::AlertToDevice, "alert_to_device"},
    {EventKind::HandshakeComplete, "handshake_complete"},
    {EventKind::DeviceData, "device_data"},
    {EventKind::RelayedUpstream, "relayed_upstream"},
    {EventKind::ServerData, "server_data"},
    {EventKind::RelayedToDevice, "relayed_to_device"},
    {EventKind::DeviceClosed, "device_closed"},
    {EventKind::UpstreamClosed, "upstream_closed"},
    {EventKind::ProbeClosed, "probe_closed"},
    {EventKind::NonTlsRelay, "non_tls_relay"},
}};

} // namespace

std::string_view to_string(EventKind k) {
    for (const auto& [kind, name] : kEventNames)
        if (kind == k) return name;
    return "?";
}

std::optional<EventKind> parse_event_kind(std::string_view text) {
    for (const auto& [kind, name] : kEventNames)
        if (name == text) return kind;
    return std::nullopt;
}

Json TranscriptEvent::to_json() const {
    Json j{{"t", format_iso8601_ms(t)}, {"t_us", t.micros}, {"kind", std::string(mitm::to_string(kind))}};
    if (!detail.empty()) j["detail"] = detail;
    if (bytes) j["bytes"] = bytes;
    if (alert_code >= 0) {
        j["alert_level"] = alert_level;
        j["alert_code"] = alert_code;
        j["alert"] = alert_name(alert_code);
    }
    return j;
}

TranscriptEvent TranscriptEvent::from_json(const Json& j) {
    TranscriptEvent e;
    e.t = Timestamp{j.at("t_us").get<std::int64_t>()};
    auto kind = parse_event_kind(j.at("kind").get<std::string>());
    if (!kind) throw ParseError("unknown transcript event " + j.at("kind").get<std::string>());
    e.kind = *kind;
    e.detail = j.value("detail", "");
    e.bytes = j.value("bytes", std::uint64_t{0});
    e.alert_level = j.value("alert_level", -1);
    e.alert_code = j.value("alert_code", -1);
    return e;
}

bool ProbeSession::has(EventKind k) const {
    return std::any_of(transcript.begin(), transcript.end(), [&](const auto& e) { return e.kind == k; });
}

bool ProbeSession::handshake_completed() const { return has(EventKind::HandshakeComplete); }

std::uint64_t ProbeSession::total(EventKind k) const {
    std::uint64_t n = 0;
    for (const auto& e : transcript)
        if (e.kind == k) n += e.bytes;
    return n;
}

bool ProbeSession::relay_faithful() const {
    return total(EventKind::DeviceData) == total(EventKind::RelayedUpstream) &&
           total(EventKind::ServerData) == total(EventKind::RelayedToDevice);
}

Json ProbeSession::to_json(bool include_plaintext) const {
    Json j{{"device_id", device_id},
           {"device_ip", device_ip},
           {"host", host},
           {"port", port},
           {"upstream_ip", upstream_ip},
           {"tls", tls},
           {"start", format_iso8601_ms(start)},
           {"start_us", start.micros},
           {"end", format_iso8601_ms(end)},
           {"end_us", end.micros}};
    Json events = Json::array();
    for (const auto& e : transcript) events.push_back(e.to_json());
    j["transcript"] = events;
    if (include_plaintext) {
        j["device_plaintext_b64"] = base64_encode(device_plaintext);
        j["server_plaintext_b64"] = base64_encode(server_plaintext);
    }
    return j;
}

ProbeSession ProbeSession::from_json(const Json& j) {
    ProbeSession s;
    s.device_id = j.at("device_id").get<std::string>();
    s.device_ip = j.value("device_ip", "");
    s.host = j.at("host").get<std::string>();
    s.port = j.at("port").get<std::uint16_t>();
    s.upstream_ip = j.value("upstream_ip", "");
    s.tls = j.value("tls", true);
    s.start = Timestamp{j.at("start_us").get<std::int64_t>()};
    s.end = Timestamp{j.at("end_us").get<std::int64_t>()};
    for (const auto& e : j.at("transcript")) s.transcript.push_back(TranscriptEvent::from_json(e));
    if (j.contains("device_plaintext_b64")) s.device_plaintext = base64_decode(j["device_plaintext_b64"].get<std::string>());
    if (j.contains("server_plaintext_b64")) s.server_plaintext = base64_decode(j["server_plaintext_b64"].get<std::string>());
    return s;
}

void TranscriptWriter::add(EventKind kind, std::string detail, std::uint64_t bytes, int level, int code) {
    std::lock_guard lock(mu_);
    Timestamp t = now_utc();
    if (!s_.transcript.empty() && t <= s_.transcript.back().t) t.micros = s_.transcript.back().t.micros + 1;
    s_.transcript.push_back({t, kind, std::move(detail), bytes, level, code});
}

std::string sessions_jsonl(const std::vector<ProbeSession>& sessions, bool include_plaintext) {
    std::string out;
    for (const auto& s : sessions) out += s.to_json(include_plaintext).dump() + "\n";
    return out;
}

std::vector<ProbeSession> parse_sessions_jsonl(std::string_view text) {
    std::vector<ProbeSession> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            out.push_back(ProbeSession::from_json(Json::parse(line)));
        } catch (const Json::exception& e) {
            throw ParseError("session line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

std::string alert_name(int code) {
    switch (code) {
    case 0: return "close_notify";
    case 10: return "unexpected_message";
    case 20: return "bad_record_mac";
    case 22: return "record_overflow";
    case 40: return "handshake_failure";
    case 42: return "bad_certificate";
    case 43: return "unsupported_certificate";
    case 44: return "certificate_revoked";
    case 45: return "certificate_expired";
    case 46: return "certificate_unknown";
    case 47: return "illegal_parameter";
    case 48: return "unknown_ca";
    case 49: return "access_denied";
    case 50: return "decode_error";
    case 51: return "decrypt_error";
    case 70: return "protocol_version";
    case 71: return "insufficient_security";
    case 80: return "internal_error";
    case 90: return "user_canceled";
    case 109: return "missing_extension";
    case 112: return "unrecognized_name";
    case 116: return "certificate_required";
    case 120: return "no_application_protocol";
    default: return "alert_" + std::to_string(code);
    }
}

} // namespace iotaudit::mitm
