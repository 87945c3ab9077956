#include "iotaudit/pcap/flow.hpp"

#include "iotaudit/pcap/dns.hpp"
#include "iotaudit/pcap/http.hpp"
#include "iotaudit/pcap/tls_records.hpp"

#include <algorithm>
#include <map>

namespace iotaudit::pcap {

std::string Endpoint::to_string() const {
    if (ip.is_v4()) return ip.to_string() + ":" + std::to_string(port);
    return "[" + ip.to_string() + "]:" + std::to_string(port);
}

FlowKey FlowKey::of(const PacketRecord& p) {
    FlowKey k;
    k.transport = p.transport;
    k.ip_protocol = p.ip_protocol;
    Endpoint a{p.src_ip, p.src_port.value_or(0)};
    Endpoint b{p.dst_ip, p.dst_port.value_or(0)};
    if (b < a) std::swap(a, b);
    k.low = a;
    k.high = b;
    return k;
}

std::string FlowKey::to_string() const {
    std::string proto(pcap::to_string(transport));
    if (transport == Transport::Other) proto += "/" + std::to_string(ip_protocol);
    return proto + " " + low.to_string() + " <-> " + high.to_string();
}

std::string_view to_string(ProtocolTag tag) {
    switch (tag) {
    case ProtocolTag::Dns: return "DNS";
    case ProtocolTag::Http: return "HTTP";
    case ProtocolTag::Tls: return "TLS";
    case ProtocolTag::Ntp: return "NTP";
    }
    return "DNS";
}

std::string_view to_string(ByteUnit u) { return u == ByteUnit::Wire ? "wire" : "payload"; }

std::optional<ByteUnit> parse_byte_unit(std::string_view text) {
    if (text == "wire") return ByteUnit::Wire;
    if (text == "payload") return ByteUnit::Payload;
    return std::nullopt;
}

namespace {

struct Segment {
    std::uint32_t seq;
    std::size_t packet;
};

struct Builder {
    FlowRecord flow;
    std::array<std::vector<Segment>, 2> tcp_segments;
    std::array<std::optional<std::uint32_t>, 2> isn; // first payload byte seq from SYN
    bool closed = false;                           // FIN or RST seen
};

void reassemble(Builder& b, std::size_t cap) {
    FlowRecord& f = b.flow;
    for (int dir = 0; dir < 2; ++dir) {
        auto& segs = b.tcp_segments[dir];
        if (segs.empty()) continue;
        const std::uint32_t base = b.isn[dir].value_or(segs.front().seq);
        struct Rel {
            std::uint64_t offset;
            std::size_t packet;
            std::size_t order;
        };
        std::vector<Rel> rel;
        rel.reserve(segs.size());
        for (std::size_t i = 0; i < segs.size(); ++i) {
            const std::uint32_t d = segs[i].seq - base; // modular distance
            if (d > 0x80000000u) {
                // Data from before the assumed start (capture began mid-retransmission); keep ordering sane.
                f.has_gaps = true;
                continue;
            }
            rel.push_back({d, segs[i].packet, i});
        }
        std::stable_sort(rel.begin(), rel.end(), [](const Rel& x, const Rel& y) { return x.offset < y.offset; });
        Bytes& out = f.payload[dir];
        std::uint64_t cursor = 0;
        for (const auto& r : rel) {
            const Bytes& data = f.packets[r.packet].payload;
            const std::uint64_t end = r.offset + data.size();
            if (end <= cursor) continue; // duplicate
            std::uint64_t skip = 0;
            if (r.offset > cursor) {
                f.has_gaps = true;
                cursor = r.offset;
            } else {
                skip = cursor - r.offset;
            }
            const std::size_t room = cap > out.size() ? cap - out.size() : 0;
            std::size_t take = static_cast<std::size_t>(data.size() - skip);
            if (take > room) {
                take = room;
                f.truncated = true;
            }
            out.insert(out.end(), data.begin() + static_cast<std::ptrdiff_t>(skip),
                       data.begin() + static_cast<std::ptrdiff_t>(skip + take));
            cursor = end;
            if (f.truncated) break;
        }
    }
}

void orient(FlowRecord& f, const DeviceMetadata* device) {
    f.device_is_initiator = true;
    if (!device) return;
    const bool init_ip = device->owns(f.initiator.ip);
    const bool resp_ip = device->owns(f.responder.ip);
    if (init_ip != resp_ip) {
        f.device_is_initiator = init_ip;
        return;
    }
    if (!f.packets.empty() && !device->macs.empty()) {
        const auto& p = f.packets.front();
        const bool first_from_initiator = f.packet_directions.front() == Direction::Forward;
        if (p.src_mac && device->owns(*p.src_mac)) {
            f.device_is_initiator = first_from_initiator;
        } else if (p.dst_mac && device->owns(*p.dst_mac)) {
            f.device_is_initiator = !first_from_initiator;
        }
    }
}

} // namespace

std::set<ProtocolTag> detect_protocols(const FlowRecord& f) {
    std::set<ProtocolTag> tags;
    const bool port53 = f.key.low.port == 53 || f.key.high.port == 53;
    const bool port123 = f.key.low.port == 123 || f.key.high.port == 123;
    if (f.key.transport == Transport::Udp) {
        if (port53) {
            for (const auto& p : f.packets)
                if (dns::parse_message(p.payload)) {
                    tags.insert(ProtocolTag::Dns);
                    break;
                }
        }
        if (port123) {
            for (const auto& p : f.packets) {
                const int version = p.payload.empty() ? 0 : (p.payload[0] >> 3) & 0x07;
                if (p.payload.size() >= 48 && version >= 1 && version <= 4) {
                    tags.insert(ProtocolTag::Ntp);
                    break;
                }
            }
        }
    }
    if (f.key.transport == Transport::Tcp) {
        if (port53) {
            for (const auto& dir : f.payload)
                for (auto msg : dns::split_tcp_stream(dir))
                    if (dns::parse_message(msg)) tags.insert(ProtocolTag::Dns);
        }
        for (const auto& dir : f.payload) {
            if (http::looks_like_http(dir)) tags.insert(ProtocolTag::Http);
            if (tls::has_record_framing(dir)) tags.insert(ProtocolTag::Tls);
        }
    }
    return tags;
}

std::vector<FlowRecord> assemble_flows(std::vector<PacketRecord> packets, const std::string& device_id,
                                       const AssemblyOptions& options) {
    std::vector<Builder> builders;
    std::map<FlowKey, std::size_t> active;

    for (auto& pkt : packets) {
        const FlowKey key = FlowKey::of(pkt);
        auto it = active.find(key);
        bool start_new = it == active.end();
        if (!start_new) {
            Builder& b = builders[it->second];
            if (pkt.transport == Transport::Tcp) {
                const bool pure_syn = pkt.tcp && (pkt.tcp->flags & tcpflag::kSyn) && !(pkt.tcp->flags & tcpflag::kAck);
                start_new = pure_syn && b.closed;
            } else {
                start_new = pkt.timestamp.micros - b.flow.last_seen.micros > options.inactivity_timeout_us;
            }
        }
        if (start_new) {
            Builder b;
            b.flow.key = key;
            b.flow.device_id = device_id;
            b.flow.initiator = {pkt.src_ip, pkt.src_port.value_or(0)};
            b.flow.responder = {pkt.dst_ip, pkt.dst_port.value_or(0)};
            b.flow.first_seen = pkt.timestamp;
            builders.push_back(std::move(b));
            active[key] = builders.size() - 1;
            it = active.find(key);
        }
        Builder& b = builders[it->second];
        FlowRecord& f = b.flow;
        const bool forward = pkt.src_ip == f.initiator.ip && pkt.src_port.value_or(0) == f.initiator.port;
        const int dir = forward ? 0 : 1;
        f.last_seen = std::max(f.last_seen, pkt.timestamp);
        f.bytes_total += pkt.wire_length;
        f.payload_bytes_total += pkt.payload.size();
        if (pkt.transport == Transport::Tcp && pkt.tcp) {
            if (pkt.tcp->flags & tcpflag::kSyn) b.isn[dir] = pkt.tcp->seq + 1;
            if (pkt.tcp->flags & (tcpflag::kFin | tcpflag::kRst)) b.closed = true;
            if (!pkt.payload.empty()) b.tcp_segments[dir].push_back({pkt.tcp->seq, f.packets.size()});
        }
        f.packet_directions.push_back(forward ? Direction::Forward : Direction::Reverse);
        f.packets.push_back(std::move(pkt));
    }

    std::vector<FlowRecord> flows;
    flows.reserve(builders.size());
    for (auto& b : builders) {
        if (b.flow.key.transport == Transport::Tcp) {
            reassemble(b, options.reassembly_cap);
        } else {
            for (std::size_t i = 0; i < b.flow.packets.size(); ++i) {
                const int dir = static_cast<int>(b.flow.packet_directions[i]);
                auto& out = b.flow.payload[dir];
                const auto& data = b.flow.packets[i].payload;
                const std::size_t room = options.reassembly_cap > out.size() ? options.reassembly_cap - out.size() : 0;
                const std::size_t take = std::min(room, data.size());
                if (take < data.size()) b.flow.truncated = true;
                out.insert(out.end(), data.begin(), data.begin() + static_cast<std::ptrdiff_t>(take));
            }
        }
        orient(b.flow, options.device);
        b.flow.protocol_tags = detect_protocols(b.flow);
        flows.push_back(std::move(b.flow));
    }
    std::stable_sort(flows.begin(), flows.end(), [](const FlowRecord& a, const FlowRecord& b) {
        if (a.first_seen != b.first_seen) return a.first_seen < b.first_seen;
        return a.key < b.key;
    });
    return flows;
}

void label_phases(std::vector<FlowRecord>& flows, const std::vector<PhaseSegment>& segments) {
    for (auto& f : flows) {
        for (const auto& s : segments) {
            if (!s.device_id.empty() && s.device_id != f.device_id) continue;
            if (f.first_seen >= s.start && f.first_seen <= s.end) {
                f.phase = s.phase;
                break;
            }
        }
    }
}

} // namespace iotaudit::pcap
