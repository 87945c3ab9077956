#pragma once

#include "iotaudit/core/phase.hpp"
#include "iotaudit/pcap/device.hpp"
#include "iotaudit/pcap/packet.hpp"

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace iotaudit::pcap {

struct Endpoint {
    IpAddress ip;
    std::uint16_t port = 0;

    std::string to_string() const;
    friend auto operator<=>(const Endpoint&, const Endpoint&) = default;
};

/// Canonical 5-tuple: the lower endpoint comes first, so both directions map
/// to the same key. ICMP/OTHER flows use port 0 on both sides.
struct FlowKey {
    Transport transport = Transport::Other;
    std::uint8_t ip_protocol = 0;
    Endpoint low, high;

    static FlowKey of(const PacketRecord& p);
    std::string to_string() const;
    friend auto operator<=>(const FlowKey&, const FlowKey&) = default;
};

enum class ProtocolTag : std::uint8_t { Dns, Http, Tls, Ntp };
std::string_view to_string(ProtocolTag tag);

/// 0 = initiator -> responder, 1 = responder -> initiator.
enum class Direction : std::uint8_t { Forward = 0, Reverse = 1 };

/// A bidirectional conversation. The initiator is the endpoint that sent the
/// first observed packet.
struct FlowRecord {
    FlowKey key;
    std::string device_id;
    std::optional<PhaseLabel> phase;
    Endpoint initiator, responder;
    /// Set once the device side is known (metadata match); falls back to
    /// "device initiated" when the device identity is not in the packets.
    bool device_is_initiator = true;

    std::vector<PacketRecord> packets;
    std::vector<Direction> packet_directions;
    std::uint64_t bytes_total = 0;         // wire bytes
    std::uint64_t payload_bytes_total = 0; // application payload bytes
    /// Per-direction application payload; TCP is reassembled in sequence order.
    std::array<Bytes, 2> payload;
    bool truncated = false; // reassembly cap reached
    bool has_gaps = false;  // missing TCP segments
    std::set<ProtocolTag> protocol_tags;
    Timestamp first_seen, last_seen;

    const Endpoint& server() const { return device_is_initiator ? responder : initiator; }
    const Endpoint& device_side() const { return device_is_initiator ? initiator : responder; }
    const Bytes& device_payload() const { return payload[device_is_initiator ? 0 : 1]; }
    const Bytes& server_payload() const { return payload[device_is_initiator ? 1 : 0]; }
    bool has_tag(ProtocolTag t) const { return protocol_tags.contains(t); }
    bool is_local() const { return server().ip.is_local(); }
    std::uint64_t application_payload_size() const { return payload[0].size() + payload[1].size(); }
};

/// Which byte count stands for "traffic volume".
enum class ByteUnit { Wire, Payload };
std::string_view to_string(ByteUnit u);
std::optional<ByteUnit> parse_byte_unit(std::string_view text);
inline std::uint64_t flow_bytes(const FlowRecord& f, ByteUnit unit) {
    return unit == ByteUnit::Wire ? f.bytes_total : f.payload_bytes_total;
}

struct AssemblyOptions {
    std::int64_t inactivity_timeout_us = 120 * kMicrosPerSecond; // non-TCP flows
    std::size_t reassembly_cap = 1024 * 1024;                    // per direction
    const DeviceMetadata* device = nullptr;
};

/// Groups packets into flows; ordered by first-packet timestamp, then key.
std::vector<FlowRecord> assemble_flows(std::vector<PacketRecord> packets, const std::string& device_id,
                                       const AssemblyOptions& options = {});

/// Runs the dissectors (DNS, HTTP, TLS, NTP) over a flow's payloads.
std::set<ProtocolTag> detect_protocols(const FlowRecord& flow);

/// Time window with its lifecycle label; produced by capture segmentation.
struct PhaseSegment {
    std::string device_id;
    std::string operation;
    PhaseLabel phase = PhaseLabel::Setup;
    Timestamp start, end; // closed interval
};

/// Attaches the phase of the segment containing each flow's first packet.
/// Flows outside every window keep their current phase.
void label_phases(std::vector<FlowRecord>& flows, const std::vector<PhaseSegment>& segments);

} // namespace iotaudit::pcap
