#pragma once

#include "iotaudit/core/json.hpp"
#include "iotaudit/core/phase.hpp"
#include "iotaudit/enc/classifier.hpp"
#include "iotaudit/pcap/flow.hpp"

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace iotaudit::tls {

enum class ProtocolVersion { Tls10, Tls11, Tls12, Tls13, SslGeneric, Sslv2, Sslv3, Proprietary };

inline constexpr std::array<ProtocolVersion, 8> kAllVersions{
    ProtocolVersion::Tls10,      ProtocolVersion::Tls11, ProtocolVersion::Tls12, ProtocolVersion::Tls13,
    ProtocolVersion::SslGeneric, ProtocolVersion::Sslv2, ProtocolVersion::Sslv3, ProtocolVersion::Proprietary};

/// TLS1.0 ... TLS1.3, SSL, SSLv2, SSLv3, PROPRIETARY.
std::string_view to_string(ProtocolVersion v);
std::optional<ProtocolVersion> parse_protocol_version(std::string_view text);

/// Maps a negotiated wire version. Anything unrecognized inside an SSL/TLS
/// frame becomes SslGeneric.
ProtocolVersion from_wire_version(std::uint16_t v);

enum class VersionOutcome { Detected, Undetermined, NotTls };

struct FlowVersion {
    VersionOutcome outcome = VersionOutcome::NotTls;
    std::optional<ProtocolVersion> version;
    std::string reason;
};

/// Version for one flow. `cls` (may be null) lets encrypted flows without a
/// record layer count as PROPRIETARY.
FlowVersion detect_flow_version(const pcap::FlowRecord& flow, const enc::TrafficClassification* cls);

/// Row key for the full lifecycle in ProtocolInventory::usage.
inline constexpr std::string_view kFullLifecycle = "FULL";

struct UndeterminedFlow {
    std::string device_id;
    std::optional<PhaseLabel> phase;
    std::string flow;
    std::string reason;
};

struct ProtocolInventory {
    /// device -> row ("SETUP".."DELETION" or "FULL") -> versions seen.
    std::map<std::string, std::map<std::string, std::set<ProtocolVersion>>> usage;
    std::vector<UndeterminedFlow> undetermined;

    /// Devices using `v` in `row`.
    std::size_t device_count(std::string_view row, ProtocolVersion v) const;
    std::set<std::string> devices_using(std::string_view row, ProtocolVersion v) const;
    /// protocols.csv: device,phase,version (one line per distinct triple).
    std::string to_csv() const;
    Json table() const; // row -> version -> device count
};

/// `classifications[i]` belongs to `flows[i]` and may be null.
ProtocolInventory detect_protocol_versions(const std::vector<pcap::FlowRecord>& flows,
                                           const std::vector<const enc::TrafficClassification*>& classifications);
/// Classifies internally with default thresholds.
ProtocolInventory detect_protocol_versions(const std::vector<pcap::FlowRecord>& flows);

} // namespace iotaudit::tls
