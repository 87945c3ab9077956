#pragma once

#include "iotaudit/core/json.hpp"
#include "iotaudit/mitm/session.hpp"

#include <chrono>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace iotaudit::mitm {

enum class MitmVerdict {
    UnknownCa,
    DecryptError,
    BadCertificate,
    CloseNotify,
    DecodeError,
    DisconnectReconnect,
    ServerHandshakeFailed,
    NoInternet,
    CommunicatesNormally,
    Unclassified,
};

inline constexpr MitmVerdict kAllMitmVerdicts[] = {
    MitmVerdict::UnknownCa,           MitmVerdict::DecryptError,          MitmVerdict::BadCertificate,
    MitmVerdict::CloseNotify,         MitmVerdict::DecodeError,           MitmVerdict::DisconnectReconnect,
    MitmVerdict::ServerHandshakeFailed, MitmVerdict::NoInternet,          MitmVerdict::CommunicatesNormally,
    MitmVerdict::Unclassified};

std::string_view to_string(MitmVerdict v);
std::optional<MitmVerdict> parse_mitm_verdict(std::string_view text);

struct MitmObservation {
    std::string device_id;
    std::string endpoint; // host:port
    MitmVerdict verdict = MitmVerdict::Unclassified;
    std::string evidence;
    std::size_t sessions = 0;
};

struct ClassifyOptions {
    std::chrono::seconds reconnect_window{30};
    std::size_t min_reconnects = 2;
};

/// One verdict per (device, endpoint). `probe_end` bounds the silence check
/// for NO_INTERNET. TLS sessions only.
std::vector<MitmObservation> classify_sessions(const std::vector<ProbeSession>& sessions, Timestamp probe_end,
                                               const ClassifyOptions& options = {});

/// Single session judged alone: no reconnect history, and no later traffic
/// is assumed unknown, so NO_INTERNET never fires.
MitmObservation classify_session(const ProbeSession& session);

/// Table-6 layout: verdict, distinct devices, servers (device-endpoint pairs).
struct VerdictTable {
    std::map<MitmVerdict, std::set<std::string>> devices;
    std::map<MitmVerdict, std::size_t> servers;

    static VerdictTable from(const std::vector<MitmObservation>& obs);
    std::string to_csv() const;
    Json to_json() const;
};

} // namespace iotaudit::mitm
