#include "packet_builder.hpp"

#include <algorithm>

#include <zlib.h>

namespace iotaudit::testing {

namespace {

std::uint16_t checksum(ByteView data, std::uint32_t sum = 0) {
    for (std::size_t i = 0; i + 1 < data.size(); i += 2) sum += load_be16(data.data() + i);
    if (data.size() % 2) sum += std::uint32_t{data.back()} << 8;
    while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
    return static_cast<std::uint16_t>(~sum);
}

Bytes ethernet(const L2& l2, std::uint16_t ethertype) {
    Bytes out(l2.dst.bytes.begin(), l2.dst.bytes.end());
    out.insert(out.end(), l2.src.bytes.begin(), l2.src.bytes.end());
    append_be16(out, ethertype);
    return out;
}

Bytes ip_frame(const IpAddress& src, const IpAddress& dst, std::uint8_t proto, ByteView l4, const L2& l2) {
    if (src.is_v4()) {
        Bytes out = ethernet(l2, 0x0800);
        Bytes hdr;
        hdr.push_back(0x45);
        hdr.push_back(0);
        append_be16(hdr, static_cast<std::uint16_t>(20 + l4.size()));
        append_be16(hdr, 0x1234);
        append_be16(hdr, 0x4000);
        hdr.push_back(64);
        hdr.push_back(proto);
        append_be16(hdr, 0);
        hdr.insert(hdr.end(), src.bytes().begin(), src.bytes().begin() + 4);
        hdr.insert(hdr.end(), dst.bytes().begin(), dst.bytes().begin() + 4);
        const auto cs = checksum(hdr);
        hdr[10] = static_cast<std::uint8_t>(cs >> 8);
        hdr[11] = static_cast<std::uint8_t>(cs);
        append(out, hdr);
        append(out, l4);
        return out;
    }
    Bytes out = ethernet(l2, 0x86DD);
    out.push_back(0x60);
    out.push_back(0);
    out.push_back(0);
    out.push_back(0);
    append_be16(out, static_cast<std::uint16_t>(l4.size()));
    out.push_back(proto);
    out.push_back(64);
    out.insert(out.end(), src.bytes().begin(), src.bytes().end());
    out.insert(out.end(), dst.bytes().begin(), dst.bytes().end());
    append(out, l4);
    return out;
}

} // namespace

IpAddress ip(const char* text) { return IpAddress::require(text); }

Bytes udp_frame(const IpAddress& src, std::uint16_t sport, const IpAddress& dst, std::uint16_t dport, ByteView payload,
                L2 l2) {
    Bytes l4;
    append_be16(l4, sport);
    append_be16(l4, dport);
    append_be16(l4, static_cast<std::uint16_t>(8 + payload.size()));
    append_be16(l4, 0);
    append(l4, payload);
    return ip_frame(src, dst, 17, l4, l2);
}

Bytes tcp_frame(const IpAddress& src, std::uint16_t sport, const IpAddress& dst, std::uint16_t dport,
                std::uint32_t seq, std::uint32_t ack, std::uint8_t flags, ByteView payload, L2 l2) {
    Bytes l4;
    append_be16(l4, sport);
    append_be16(l4, dport);
    append_be32(l4, seq);
    append_be32(l4, ack);
    l4.push_back(0x50);
    l4.push_back(flags);
    append_be16(l4, 65535);
    append_be16(l4, 0);
    append_be16(l4, 0);
    append(l4, payload);
    return ip_frame(src, dst, 6, l4, l2);
}

Bytes icmp_frame(const IpAddress& src, const IpAddress& dst, L2 l2) {
    const Bytes echo = {8, 0, 0, 0, 0, 1, 0, 1, 'p', 'i', 'n', 'g'};
    return ip_frame(src, dst, src.is_v4() ? 1 : 58, echo, l2);
}

TcpConversation::TcpConversation(IpAddress client, std::uint16_t client_port, IpAddress server,
                                 std::uint16_t server_port, std::uint32_t client_isn, std::uint32_t server_isn)
    : client_(client), server_(server), cport_(client_port), sport_(server_port), cseq_(client_isn),
      sseq_(server_isn) {}

void TcpConversation::handshake(Timestamp ts) {
    frames_.push_back({ts, tcp_frame(client_, cport_, server_, sport_, cseq_, 0, 0x02, {}, c2s_)});
    frames_.push_back({{ts.micros + 1000}, tcp_frame(server_, sport_, client_, cport_, sseq_, cseq_ + 1, 0x12, {}, s2c_)});
    ++cseq_;
    ++sseq_;
    frames_.push_back({{ts.micros + 2000}, tcp_frame(client_, cport_, server_, sport_, cseq_, sseq_, 0x10, {}, c2s_)});
}

void TcpConversation::send(bool from_client, Timestamp ts, ByteView data, std::size_t mss) {
    std::size_t off = 0;
    std::int64_t t = ts.micros;
    while (off < data.size()) {
        const std::size_t n = std::min(mss, data.size() - off);
        auto chunk = data.subspan(off, n);
        if (from_client) {
            frames_.push_back({{t}, tcp_frame(client_, cport_, server_, sport_, cseq_, sseq_, 0x18, chunk, c2s_)});
            cseq_ += static_cast<std::uint32_t>(n);
        } else {
            frames_.push_back({{t}, tcp_frame(server_, sport_, client_, cport_, sseq_, cseq_, 0x18, chunk, s2c_)});
            sseq_ += static_cast<std::uint32_t>(n);
        }
        off += n;
        t += 100;
    }
}

void TcpConversation::client_send(Timestamp ts, ByteView data, std::size_t mss) { send(true, ts, data, mss); }
void TcpConversation::server_send(Timestamp ts, ByteView data, std::size_t mss) { send(false, ts, data, mss); }

void TcpConversation::close(Timestamp ts) {
    frames_.push_back({ts, tcp_frame(client_, cport_, server_, sport_, cseq_, sseq_, 0x11, {}, c2s_)});
    frames_.push_back({{ts.micros + 500}, tcp_frame(server_, sport_, client_, cport_, sseq_, cseq_ + 1, 0x11, {}, s2c_)});
}

Bytes to_pcap(const std::vector<TimedFrame>& frames) {
    pcap::PcapWriter w;
    for (const auto& f : frames) w.add(f.ts, f.frame);
    return w.bytes();
}

namespace {
std::uint64_t splitmix(std::uint64_t& s) {
    std::uint64_t z = (s += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}
} // namespace

Bytes random_bytes(std::size_t n, std::uint64_t seed) {
    Bytes out(n);
    for (auto& b : out) b = static_cast<std::uint8_t>(splitmix(seed) >> 56);
    return out;
}

Bytes ascii_text(std::size_t n, std::uint64_t seed) {
    static constexpr char kAlphabet[] = "eeeeeeeeetttttaaaoooiinn    ";
    Bytes out(n);
    for (auto& b : out) b = static_cast<std::uint8_t>(kAlphabet[splitmix(seed) % (sizeof kAlphabet - 1)]);
    return out;
}

Bytes gzip_compress(ByteView data) {
    z_stream zs{};
    if (deflateInit2(&zs, Z_BEST_COMPRESSION, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) return {};
    Bytes out(deflateBound(&zs, static_cast<uLong>(data.size())) + 32);
    zs.next_in = const_cast<Bytef*>(data.data());
    zs.avail_in = static_cast<uInt>(data.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    deflate(&zs, Z_FINISH);
    out.resize(zs.total_out);
    deflateEnd(&zs);
    return out;
}

} // namespace iotaudit::testing
