#include "iotaudit/mitm/classify.hpp"

#include "iotaudit/core/strings.hpp"

#include <algorithm>
#include <sstream>

namespace iotaudit::mitm {

std::string_view to_string(MitmVerdict v) {
    switch (v) {
    case MitmVerdict::UnknownCa: return "UNKNOWN_CA";
    case MitmVerdict::DecryptError: return "DECRYPT_ERROR";
    case MitmVerdict::BadCertificate: return "BAD_CERTIFICATE";
    case MitmVerdict::CloseNotify: return "CLOSE_NOTIFY";
    case MitmVerdict::DecodeError: return "DECODE_ERROR";
    case MitmVerdict::DisconnectReconnect: return "DISCONNECT_RECONNECT";
    case MitmVerdict::ServerHandshakeFailed: return "SERVER_HANDSHAKE_FAILED";
    case MitmVerdict::NoInternet: return "NO_INTERNET";
    case MitmVerdict::CommunicatesNormally: return "COMMUNICATES_NORMALLY";
    case MitmVerdict::Unclassified: return "UNCLASSIFIED";
    }
    return "?";
}

std::optional<MitmVerdict> parse_mitm_verdict(std::string_view text) {
    for (auto v : kAllMitmVerdicts)
        if (iequals(text, to_string(v))) return v;
    return std::nullopt;
}

namespace {

std::optional<MitmVerdict> alert_verdict(int code) {
    switch (code) {
    case 48: return MitmVerdict::UnknownCa;
    case 51: return MitmVerdict::DecryptError;
    case 42: return MitmVerdict::BadCertificate;
    case 0: return MitmVerdict::CloseNotify;
    case 50: return MitmVerdict::DecodeError;
    default: return std::nullopt;
    }
}

/// First alert that counts as the device's reaction: any fatal alert, or
/// close_notify before the device sent application data.
const TranscriptEvent* reaction_alert(const ProbeSession& s) {
    bool data_seen = false;
    for (const auto& e : s.transcript) {
        if (e.kind == EventKind::DeviceData) data_seen = true;
        if (e.kind != EventKind::AlertFromDevice) continue;
        if (e.alert_code == 0 && data_seen) continue;
        if (e.alert_code == 0 || e.alert_level == 2) return &e;
    }
    return nullptr;
}

/// The device walked away mid-handshake without saying why.
bool abandoned(const ProbeSession& s) {
    if (s.handshake_completed() || s.has(EventKind::UpstreamFailed) || s.has(EventKind::AlertFromDevice)) return false;
    return std::any_of(s.transcript.begin(), s.transcript.end(), [](const auto& e) {
        return e.kind == EventKind::DeviceClosed && e.detail == "during handshake";
    });
}

std::string at(const TranscriptEvent& e) { return format_iso8601_ms(e.t); }

struct Group {
    std::string device, endpoint;
    std::vector<const ProbeSession*> sessions;
};

MitmObservation judge(const Group& g, const std::vector<const ProbeSession*>& device_sessions,
                      std::optional<Timestamp> probe_end, const ClassifyOptions& opt) {
    MitmObservation o{g.device, g.endpoint, MitmVerdict::Unclassified, {}, g.sessions.size()};

    for (const auto* s : g.sessions)
        if (const auto* a = reaction_alert(*s)) {
            if (auto v = alert_verdict(a->alert_code)) {
                o.verdict = *v;
                o.evidence = "device sent alert " + alert_name(a->alert_code) + " (" + std::to_string(a->alert_code) +
                             ") at " + at(*a);
            } else {
                o.evidence = "device sent alert " + alert_name(a->alert_code) + " (" +
                             std::to_string(a->alert_code) + "), outside the verdict taxonomy";
            }
            return o;
        }

    // Longest run of abandoned handshakes where each redial follows the
    // previous attempt within the window.
    std::size_t run = 0, best = 0;
    const ProbeSession* prev = nullptr;
    const auto window_us = std::chrono::duration_cast<std::chrono::microseconds>(opt.reconnect_window).count();
    for (const auto* s : g.sessions) {
        if (!abandoned(*s)) {
            run = 0;
            prev = nullptr;
            continue;
        }
        run = (prev && s->start.micros - prev->end.micros <= window_us) ? run + 1 : 1;
        best = std::max(best, run);
        prev = s;
    }
    if (best >= opt.min_reconnects) {
        o.verdict = MitmVerdict::DisconnectReconnect;
        o.evidence = std::to_string(best) + " abandoned handshakes, each redial within " +
                     std::to_string(opt.reconnect_window.count()) + " s";
        return o;
    }

    for (const auto* s : g.sessions)
        for (const auto& e : s->transcript)
            if (e.kind == EventKind::UpstreamFailed) {
                o.verdict = MitmVerdict::ServerHandshakeFailed;
                o.evidence = "upstream leg failed before the forged handshake: " + e.detail;
                return o;
            }

    const bool any_data = std::any_of(g.sessions.begin(), g.sessions.end(),
                                      [](const auto* s) { return s->total(EventKind::RelayedUpstream) > 0; });
    if (!any_data && probe_end) {
        const Timestamp last_end = g.sessions.back()->end;
        const bool later_traffic = std::any_of(device_sessions.begin(), device_sessions.end(),
                                               [&](const auto* s) { return s->start > last_end; });
        if (!later_traffic && std::any_of(g.sessions.begin(), g.sessions.end(),
                                          [](const auto* s) { return abandoned(*s); })) {
            o.verdict = MitmVerdict::NoInternet;
            o.evidence = "no device traffic to any endpoint for the remaining " +
                         format_fixed(static_cast<double>(probe_end->micros - last_end.micros) / 1e6, 1) +
                         " s of the probe";
            return o;
        }
    }

    if (any_data) {
        std::uint64_t up = 0;
        for (const auto* s : g.sessions) up += s->total(EventKind::RelayedUpstream);
        o.verdict = MitmVerdict::CommunicatesNormally;
        o.evidence = std::to_string(up) + " application bytes relayed under the forged certificate";
        return o;
    }
    o.evidence = "no rule matched";
    return o;
}

} // namespace

std::vector<MitmObservation> classify_sessions(const std::vector<ProbeSession>& sessions, Timestamp probe_end,
                                               const ClassifyOptions& options) {
    std::map<std::pair<std::string, std::string>, Group> groups;
    std::map<std::string, std::vector<const ProbeSession*>> by_device;
    for (const auto& s : sessions) {
        by_device[s.device_id].push_back(&s);
        if (!s.tls) continue;
        auto& g = groups[{s.device_id, s.endpoint()}];
        g.device = s.device_id;
        g.endpoint = s.endpoint();
        g.sessions.push_back(&s);
    }
    std::vector<MitmObservation> out;
    for (auto& [key, g] : groups) {
        std::sort(g.sessions.begin(), g.sessions.end(), [](const auto* a, const auto* b) { return a->start < b->start; });
        out.push_back(judge(g, by_device[g.device], probe_end, options));
    }
    return out;
}

MitmObservation classify_session(const ProbeSession& session) {
    Group g{session.device_id, session.endpoint(), {&session}};
    return judge(g, {&session}, std::nullopt, {});
}

VerdictTable VerdictTable::from(const std::vector<MitmObservation>& obs) {
    VerdictTable t;
    for (const auto& o : obs) {
        t.devices[o.verdict].insert(o.device_id);
        ++t.servers[o.verdict];
    }
    return t;
}

std::string VerdictTable::to_csv() const {
    std::ostringstream out;
    out << "verdict,device_count,server_count\n";
    for (auto v : kAllMitmVerdicts) {
        auto d = devices.find(v);
        auto s = servers.find(v);
        out << to_string(v) << ',' << (d == devices.end() ? 0 : d->second.size()) << ','
            << (s == servers.end() ? 0 : s->second) << '\n';
    }
    return out.str();
}

Json VerdictTable::to_json() const {
    Json j = Json::object();
    for (auto v : kAllMitmVerdicts) {
        auto d = devices.find(v);
        auto s = servers.find(v);
        j[std::string(to_string(v))] = {{"devices", d == devices.end() ? 0 : d->second.size()},
                                        {"servers", s == servers.end() ? 0 : s->second}};
    }
    return j;
}

} // namespace iotaudit::mitm
