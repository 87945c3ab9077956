#include "iotaudit/pcap/packet.hpp"

#include "iotaudit/core/error.hpp"
#include "iotaudit/pcap/capture_file.hpp"

#include <algorithm>

namespace iotaudit::pcap {

std::string_view to_string(Transport t) {
    switch (t) {
    case Transport::Tcp: return "TCP";
    case Transport::Udp: return "UDP";
    case Transport::Icmp: return "ICMP";
    case Transport::Other: return "OTHER";
    }
    return "OTHER";
}

bool is_supported_link_type(std::uint32_t lt) {
    return lt == linktype::kEthernet || lt == linktype::kLinuxSll || lt == linktype::kLinuxSll2 ||
           lt == linktype::kRaw || lt == linktype::kNull || lt == 12 /* raw on OpenBSD-derived writers */;
}

namespace {

constexpr std::uint16_t kEtherIpv4 = 0x0800;
constexpr std::uint16_t kEtherIpv6 = 0x86DD;
constexpr std::uint16_t kEtherVlan = 0x8100;
constexpr std::uint16_t kEtherQinQ = 0x88A8;

DecodeResult malformed(std::string why) {
    DecodeResult r;
    r.status = DecodeStatus::Malformed;
    r.reason = std::move(why);
    return r;
}

DecodeResult not_ip() {
    DecodeResult r;
    r.status = DecodeStatus::NotIp;
    return r;
}

DecodeResult decode_transport(PacketRecord pkt, std::uint8_t proto, ByteView l4) {
    pkt.ip_protocol = proto;
    if (proto == 6) {
        if (l4.size() < 20) return malformed("short TCP header");
        const std::size_t hl = std::size_t{static_cast<std::uint8_t>(l4[12] >> 4)} * 4;
        if (hl < 20 || hl > l4.size()) return malformed("bad TCP data offset");
        pkt.transport = Transport::Tcp;
        pkt.src_port = load_be16(l4.data());
        pkt.dst_port = load_be16(l4.data() + 2);
        pkt.tcp = TcpInfo{load_be32(l4.data() + 4), load_be32(l4.data() + 8), l4[13]};
        pkt.payload.assign(l4.begin() + static_cast<std::ptrdiff_t>(hl), l4.end());
    } else if (proto == 17) {
        if (l4.size() < 8) return malformed("short UDP header");
        const std::uint16_t ulen = load_be16(l4.data() + 4);
        if (ulen < 8) return malformed("bad UDP length");
        pkt.transport = Transport::Udp;
        pkt.src_port = load_be16(l4.data());
        pkt.dst_port = load_be16(l4.data() + 2);
        const std::size_t end = std::min<std::size_t>(ulen, l4.size());
        pkt.payload.assign(l4.begin() + 8, l4.begin() + static_cast<std::ptrdiff_t>(end));
    } else {
        pkt.transport = (proto == 1 || proto == 58) ? Transport::Icmp : Transport::Other;
        pkt.payload.assign(l4.begin(), l4.end());
    }
    DecodeResult r;
    r.status = DecodeStatus::Ok;
    r.packet = std::move(pkt);
    return r;
}

DecodeResult decode_ipv4(PacketRecord pkt, ByteView ip) {
    if (ip.size() < 20) return malformed("short IPv4 header");
    if ((ip[0] >> 4) != 4) return malformed("IPv4 version mismatch");
    const std::size_t ihl = std::size_t{static_cast<std::uint8_t>(ip[0] & 0x0F)} * 4;
    if (ihl < 20 || ihl > ip.size()) return malformed("bad IPv4 header length");
    const std::size_t total = load_be16(ip.data() + 2);
    if (total < ihl) return malformed("IPv4 total length below header length");
    pkt.src_ip = IpAddress::v4(ip.data() + 12);
    pkt.dst_ip = IpAddress::v4(ip.data() + 16);
    const std::size_t end = std::min(total, ip.size()); // snaplen may cut the datagram; padding is trimmed
    const std::uint16_t frag = load_be16(ip.data() + 6);
    const std::uint8_t proto = ip[9];
    if ((frag & 0x1FFF) != 0) {
        // Non-first fragment: no transport header to read.
        pkt.ip_protocol = proto;
        pkt.transport = Transport::Other;
        pkt.payload.assign(ip.begin() + static_cast<std::ptrdiff_t>(ihl), ip.begin() + static_cast<std::ptrdiff_t>(end));
        DecodeResult r;
        r.status = DecodeStatus::Ok;
        r.packet = std::move(pkt);
        return r;
    }
    return decode_transport(std::move(pkt), proto, ip.subspan(ihl, end - ihl));
}

DecodeResult decode_ipv6(PacketRecord pkt, ByteView ip) {
    if (ip.size() < 40) return malformed("short IPv6 header");
    if ((ip[0] >> 4) != 6) return malformed("IPv6 version mismatch");
    const std::size_t plen = load_be16(ip.data() + 4);
    pkt.src_ip = IpAddress::v6(ip.data() + 8);
    pkt.dst_ip = IpAddress::v6(ip.data() + 24);
    std::uint8_t next = ip[6];
    std::size_t off = 40;
    const std::size_t end = std::min(ip.size(), 40 + plen);
    for (int guard = 0; guard < 8; ++guard) {
        if (next == 0 || next == 43 || next == 60) {
            if (off + 8 > end) return malformed("truncated IPv6 extension header");
            const std::uint8_t nh = ip[off];
            off += (std::size_t{ip[off + 1]} + 1) * 8;
            next = nh;
        } else if (next == 44) {
            if (off + 8 > end) return malformed("truncated IPv6 fragment header");
            const std::uint8_t nh = ip[off];
            const bool later_fragment = (load_be16(ip.data() + off + 2) & 0xFFF8) != 0;
            off += 8;
            next = nh;
            if (later_fragment) {
                pkt.ip_protocol = next;
                pkt.transport = Transport::Other;
                pkt.payload.assign(ip.begin() + static_cast<std::ptrdiff_t>(off), ip.begin() + static_cast<std::ptrdiff_t>(end));
                DecodeResult r;
                r.status = DecodeStatus::Ok;
                r.packet = std::move(pkt);
                return r;
            }
        } else {
            break;
        }
    }
    if (off > end) return malformed("IPv6 extension headers overrun packet");
    return decode_transport(std::move(pkt), next, ip.subspan(off, end - off));
}

DecodeResult decode_network(PacketRecord pkt, std::uint16_t ethertype, ByteView rest) {
    if (ethertype == kEtherIpv4) return decode_ipv4(std::move(pkt), rest);
    if (ethertype == kEtherIpv6) return decode_ipv6(std::move(pkt), rest);
    return not_ip();
}

} // namespace

DecodeResult decode_frame(std::uint32_t link_type, ByteView frame, std::uint32_t wire_length, Timestamp ts) {
    PacketRecord pkt;
    pkt.timestamp = ts;
    pkt.wire_length = wire_length < frame.size() ? static_cast<std::uint32_t>(frame.size()) : wire_length;

    switch (link_type) {
    case linktype::kEthernet: {
        if (frame.size() < 14) return malformed("short Ethernet header");
        MacAddress dst, src;
        std::copy_n(frame.begin(), 6, dst.bytes.begin());
        std::copy_n(frame.begin() + 6, 6, src.bytes.begin());
        pkt.dst_mac = dst;
        pkt.src_mac = src;
        std::size_t off = 12;
        std::uint16_t et = load_be16(frame.data() + off);
        while (et == kEtherVlan || et == kEtherQinQ) {
            off += 4;
            if (off + 2 > frame.size()) return malformed("truncated VLAN tag");
            et = load_be16(frame.data() + off);
        }
        return decode_network(std::move(pkt), et, frame.subspan(off + 2));
    }
    case linktype::kLinuxSll: {
        if (frame.size() < 16) return malformed("short SLL header");
        if (load_be16(frame.data() + 4) == 6) {
            MacAddress src;
            std::copy_n(frame.begin() + 6, 6, src.bytes.begin());
            pkt.src_mac = src;
        }
        return decode_network(std::move(pkt), load_be16(frame.data() + 14), frame.subspan(16));
    }
    case linktype::kLinuxSll2: {
        if (frame.size() < 20) return malformed("short SLL2 header");
        if (frame[11] == 6) {
            MacAddress src;
            std::copy_n(frame.begin() + 12, 6, src.bytes.begin());
            pkt.src_mac = src;
        }
        return decode_network(std::move(pkt), load_be16(frame.data()), frame.subspan(20));
    }
    case linktype::kRaw:
    case 12: {
        if (frame.empty()) return malformed("empty raw frame");
        const int v = frame[0] >> 4;
        if (v == 4) return decode_ipv4(std::move(pkt), frame);
        if (v == 6) return decode_ipv6(std::move(pkt), frame);
        return malformed("raw frame with IP version " + std::to_string(v));
    }
    case linktype::kNull: {
        if (frame.size() < 4) return malformed("short loopback header");
        const std::uint32_t fam = load_le32(frame.data()) > 0xFFFF ? load_be32(frame.data()) : load_le32(frame.data());
        if (fam == 2) return decode_ipv4(std::move(pkt), frame.subspan(4));
        if (fam == 24 || fam == 28 || fam == 30 || fam == 10) return decode_ipv6(std::move(pkt), frame.subspan(4));
        return not_ip();
    }
    default:
        throw ParseError("unsupported link type " + std::to_string(link_type));
    }
}

namespace {

ParsedCapture decode_all(const CaptureFile& file, std::string device_id) {
    ParsedCapture out;
    out.device_id = std::move(device_id);
    out.warnings = file.warnings();
    out.packets.reserve(file.records().size());
    for (const auto& rec : file.records()) {
        if (!is_supported_link_type(rec.link_type))
            throw ParseError("unsupported link type " + std::to_string(rec.link_type));
        auto res = decode_frame(rec.link_type, rec.frame, rec.original_length, rec.timestamp);
        switch (res.status) {
        case DecodeStatus::Ok: out.packets.push_back(std::move(res.packet)); break;
        case DecodeStatus::NotIp: ++out.non_ip_skipped; break;
        case DecodeStatus::Malformed: ++out.malformed_skipped; break;
        }
    }
    return out;
}

} // namespace

ParsedCapture parse_capture(const std::filesystem::path& path, std::string device_id) {
    auto file = CaptureFile::open(path);
    try {
        return decode_all(file, std::move(device_id));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

ParsedCapture parse_capture_bytes(Bytes data, std::string device_id) {
    auto file = CaptureFile::from_bytes(std::move(data));
    return decode_all(file, std::move(device_id));
}

} // namespace iotaudit::pcap
