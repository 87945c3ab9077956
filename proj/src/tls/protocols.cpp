#include "iotaudit/tls/protocols.hpp"

#include "iotaudit/core/strings.hpp"
#include "iotaudit/pcap/tls_records.hpp"

#include <sstream>

namespace iotaudit::tls {

namespace wire = pcap::tls::version;

std::string_view to_string(ProtocolVersion v) {
    switch (v) {
    case ProtocolVersion::Tls10: return "TLS1.0";
    case ProtocolVersion::Tls11: return "TLS1.1";
    case ProtocolVersion::Tls12: return "TLS1.2";
    case ProtocolVersion::Tls13: return "TLS1.3";
    case ProtocolVersion::SslGeneric: return "SSL";
    case ProtocolVersion::Sslv2: return "SSLv2";
    case ProtocolVersion::Sslv3: return "SSLv3";
    case ProtocolVersion::Proprietary: return "PROPRIETARY";
    }
    return "?";
}

std::optional<ProtocolVersion> parse_protocol_version(std::string_view text) {
    for (auto v : kAllVersions)
        if (iequals(text, to_string(v))) return v;
    return std::nullopt;
}

ProtocolVersion from_wire_version(std::uint16_t v) {
    switch (v) {
    case wire::kSsl2: return ProtocolVersion::Sslv2;
    case wire::kSsl3: return ProtocolVersion::Sslv3;
    case wire::kTls10: return ProtocolVersion::Tls10;
    case wire::kTls11: return ProtocolVersion::Tls11;
    case wire::kTls12: return ProtocolVersion::Tls12;
    case wire::kTls13: return ProtocolVersion::Tls13;
    default: return ProtocolVersion::SslGeneric;
    }
}

FlowVersion detect_flow_version(const pcap::FlowRecord& flow, const enc::TrafficClassification* cls) {
    const bool framed = flow.has_tag(pcap::ProtocolTag::Tls) || pcap::tls::has_record_framing(flow.payload[0]) ||
                        pcap::tls::has_record_framing(flow.payload[1]);
    if (framed) {
        const auto s = pcap::tls::summarize_session(flow.payload[0], flow.payload[1], 0);
        if (s.server_hello)
            return {VersionOutcome::Detected, from_wire_version(s.server_hello->negotiated_version()), "ServerHello"};
        if (s.sslv2_server_version)
            return {VersionOutcome::Detected, from_wire_version(*s.sslv2_server_version), "SSLv2 SERVER-HELLO"};
        if (s.application_records > 0)
            return {VersionOutcome::Detected, ProtocolVersion::SslGeneric, "records without a visible handshake"};
        if (s.record_layer)
            return {VersionOutcome::Undetermined, std::nullopt, "handshake ended before ServerHello"};
    }
    if (cls && cls->verdict == enc::Verdict::Encrypted && cls->rule != enc::Rule::Dnskey && !cls->tls_record_layer)
        return {VersionOutcome::Detected, ProtocolVersion::Proprietary, "encrypted without a TLS record layer"};
    return {};
}

std::set<std::string> ProtocolInventory::devices_using(std::string_view row, ProtocolVersion v) const {
    std::set<std::string> out;
    for (const auto& [device, rows] : usage) {
        auto it = rows.find(std::string(row));
        if (it != rows.end() && it->second.contains(v)) out.insert(device);
    }
    return out;
}

std::size_t ProtocolInventory::device_count(std::string_view row, ProtocolVersion v) const {
    return devices_using(row, v).size();
}

std::string ProtocolInventory::to_csv() const {
    std::ostringstream out;
    out << "device_id,phase,version\n";
    for (const auto& [device, rows] : usage)
        for (const auto& [row, versions] : rows)
            for (auto v : versions) out << csv_row({device, row, std::string(to_string(v))}) << '\n';
    return out.str();
}

Json ProtocolInventory::table() const {
    Json t = Json::object();
    std::vector<std::string> rows;
    for (auto p : kAllPhases) rows.emplace_back(to_string(p));
    rows.emplace_back(kFullLifecycle);
    for (const auto& row : rows) {
        Json r = Json::object();
        for (auto v : kAllVersions) r[std::string(to_string(v))] = device_count(row, v);
        t[row] = r;
    }
    t["undetermined_flows"] = undetermined.size();
    return t;
}

ProtocolInventory detect_protocol_versions(const std::vector<pcap::FlowRecord>& flows,
                                           const std::vector<const enc::TrafficClassification*>& classifications) {
    ProtocolInventory inv;
    for (std::size_t i = 0; i < flows.size(); ++i) {
        const auto& f = flows[i];
        const auto* cls = i < classifications.size() ? classifications[i] : nullptr;
        const auto fv = detect_flow_version(f, cls);
        if (fv.outcome == VersionOutcome::Undetermined) {
            inv.undetermined.push_back({f.device_id, f.phase, f.key.to_string(), fv.reason});
            continue;
        }
        if (fv.outcome != VersionOutcome::Detected) continue;
        auto& rows = inv.usage[f.device_id];
        if (f.phase) rows[std::string(to_string(*f.phase))].insert(*fv.version);
        rows[std::string(kFullLifecycle)].insert(*fv.version);
    }
    return inv;
}

ProtocolInventory detect_protocol_versions(const std::vector<pcap::FlowRecord>& flows) {
    std::vector<std::optional<enc::TrafficClassification>> owned;
    owned.reserve(flows.size());
    for (const auto& f : flows) owned.push_back(enc::classify_flow(f));
    std::vector<const enc::TrafficClassification*> ptrs;
    for (const auto& c : owned) ptrs.push_back(c ? &*c : nullptr);
    return detect_protocol_versions(flows, ptrs);
}

} // namespace iotaudit::tls
