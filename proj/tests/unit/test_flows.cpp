#include "iotaudit/pcap/flow.hpp"
#include "oracles.hpp"
#include "packet_builder.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace iotaudit;
using namespace iotaudit::testing;

namespace {

std::vector<pcap::PacketRecord> decode(const std::vector<TimedFrame>& frames) {
    return pcap::parse_capture_bytes(to_pcap(frames), "dev").packets;
}

} // namespace

TEST_CASE("TCP handshake plus two data segments is one flow with concatenated payload") {
    TcpConversation c(ip("192.168.1.20"), 40000, ip("47.1.2.3"), 80);
    c.handshake(Timestamp::from_seconds(10));
    c.client_send(Timestamp::from_seconds(11), to_bytes("GET / HTTP/1.1\r\n"));
    c.client_send(Timestamp::from_seconds(12), to_bytes("Host: x\r\n\r\n"));
    auto flows = pcap::assemble_flows(decode(c.frames()), "dev");
    REQUIRE(flows.size() == 1);
    CHECK(flows[0].payload[0] == to_bytes("GET / HTTP/1.1\r\nHost: x\r\n\r\n"));
    CHECK(flows[0].payload[1].empty());
    CHECK(flows[0].initiator.ip.to_string() == "192.168.1.20");
    CHECK(flows[0].has_tag(pcap::ProtocolTag::Http));
}

TEST_CASE("UDP packets on one 5-tuple 300 s apart form two flows") {
    std::vector<TimedFrame> frames{
        {Timestamp::from_seconds(0), udp_frame(ip("192.168.1.2"), 5000, ip("1.2.3.4"), 6000, to_bytes("a"))},
        {Timestamp::from_seconds(300), udp_frame(ip("192.168.1.2"), 5000, ip("1.2.3.4"), 6000, to_bytes("b"))},
    };
    CHECK(pcap::assemble_flows(decode(frames), "dev").size() == 2);
    frames[1].ts = Timestamp::from_seconds(120);
    CHECK(pcap::assemble_flows(decode(frames), "dev").size() == 1);
}

TEST_CASE("out-of-order and duplicate TCP segments reassemble in sequence order") {
    TcpConversation c(ip("192.168.1.20"), 40000, ip("47.1.2.3"), 443);
    c.handshake(Timestamp::from_seconds(1));
    c.client_send(Timestamp::from_seconds(2), to_bytes("0123456789ABCDEF"), 4);
    auto frames = c.frames();
    // frames: SYN, SYN/ACK, ACK, then 4 data segments. Swap two and duplicate one.
    std::swap(frames[3], frames[5]);
    frames.push_back(frames[4]);
    auto flows = pcap::assemble_flows(decode(frames), "dev");
    REQUIRE(flows.size() == 1);
    CHECK(flows[0].payload[0] == to_bytes("0123456789ABCDEF"));
    CHECK_FALSE(flows[0].has_gaps);
    std::size_t segment_sum = 0;
    for (const auto& p : flows[0].packets) segment_sum += p.payload.size();
    CHECK(flows[0].payload[0].size() <= segment_sum);
}

TEST_CASE("reassembly cap truncates and flags the flow") {
    TcpConversation c(ip("192.168.1.20"), 40000, ip("47.1.2.3"), 443);
    c.handshake(Timestamp::from_seconds(1));
    c.server_send(Timestamp::from_seconds(2), random_bytes(5000, 1));
    pcap::AssemblyOptions opt;
    opt.reassembly_cap = 1024;
    auto flows = pcap::assemble_flows(decode(c.frames()), "dev", opt);
    REQUIRE(flows.size() == 1);
    CHECK(flows[0].payload[1].size() == 1024);
    CHECK(flows[0].truncated);
}

TEST_CASE("device metadata fixes orientation when the capture starts mid-flow") {
    // First observed packet is server -> device.
    std::vector<TimedFrame> frames{
        {Timestamp::from_seconds(1), udp_frame(ip("47.1.2.3"), 9000, ip("192.168.1.20"), 5000, to_bytes("r"), {kRouterMac, kDeviceMac})},
        {Timestamp::from_seconds(2), udp_frame(ip("192.168.1.20"), 5000, ip("47.1.2.3"), 9000, to_bytes("q"))},
    };
    pcap::DeviceMetadata dev;
    dev.device_id = "dev";
    dev.macs = {kDeviceMac};
    pcap::AssemblyOptions opt;
    opt.device = &dev;
    auto flows = pcap::assemble_flows(decode(frames), "dev", opt);
    REQUIRE(flows.size() == 1);
    CHECK_FALSE(flows[0].device_is_initiator);
    CHECK(flows[0].server().ip.to_string() == "47.1.2.3");
    CHECK(flows[0].device_payload() == to_bytes("q"));
}

TEST_CASE("byte conservation and key consistency") {
    std::vector<TimedFrame> frames;
    for (int i = 0; i < 40; ++i)
        frames.push_back({Timestamp::from_seconds(i * 7), udp_frame(ip("192.168.1.2"), 5000 + i % 3, ip("1.2.3.4"), 53, random_bytes(i + 1, i))});
    frames.push_back({Timestamp::from_seconds(500), icmp_frame(ip("192.168.1.2"), ip("1.2.3.4"))});
    auto packets = decode(frames);
    std::uint64_t wire = 0;
    for (const auto& p : packets) wire += p.wire_length;
    auto flows = pcap::assemble_flows(packets, "dev");
    std::uint64_t sum = 0;
    for (const auto& f : flows) {
        std::uint64_t fsum = 0;
        for (const auto& p : f.packets) {
            fsum += p.wire_length;
            CHECK(pcap::FlowKey::of(p) == f.key);
        }
        CHECK(fsum == f.bytes_total);
        sum += f.bytes_total;
    }
    CHECK(sum == wire);
}

TEST_CASE("flow grouping matches the brute-force oracle on random interleavings") {
    std::mt19937_64 rng(20240601);
    for (int round = 0; round < 10; ++round) {
        std::vector<TimedFrame> frames;
        std::vector<OraclePacket> oracle_pkts;
        std::uint64_t next_id = 1;
        for (int f = 0; f < 50; ++f) {
            const bool udp = rng() % 2;
            const auto dev = "192.168.1." + std::to_string(2 + rng() % 3);
            const auto srv = "47.0." + std::to_string(rng() % 4) + "." + std::to_string(1 + rng() % 3);
            const std::uint16_t dport = udp ? 53 : 443;
            const auto sport = static_cast<std::uint16_t>(30000 + f);
            double t = static_cast<double>(rng() % 1000);
            std::uint32_t cseq = 1000, sseq = 9000;
            const int n = 1 + static_cast<int>(rng() % 8);
            for (int k = 0; k < n; ++k) {
                t += (rng() % 5 == 0) ? 100.0 + static_cast<double>(rng() % 200) : static_cast<double>(rng() % 20);
                const bool from_dev = rng() % 2;
                Bytes payload;
                append_be32(payload, static_cast<std::uint32_t>(next_id >> 32));
                append_be32(payload, static_cast<std::uint32_t>(next_id));
                const auto src = from_dev ? dev : srv;
                const auto dst = from_dev ? srv : dev;
                const auto sp = from_dev ? sport : dport;
                const auto dp = from_dev ? dport : sport;
                Bytes frame;
                if (udp) {
                    frame = udp_frame(ip(src.c_str()), sp, ip(dst.c_str()), dp, payload);
                } else {
                    auto& seq = from_dev ? cseq : sseq;
                    frame = tcp_frame(ip(src.c_str()), sp, ip(dst.c_str()), dp, seq, 0, 0x18, payload);
                    seq += 8;
                }
                frames.push_back({Timestamp::from_seconds(t), frame});
                oracle_pkts.push_back({next_id, udp ? "udp" : "tcp", src + "|" + std::to_string(sp),
                                       dst + "|" + std::to_string(dp), t});
                ++next_id;
            }
        }
        std::vector<std::size_t> order(frames.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return frames[a].ts < frames[b].ts; });
        std::vector<TimedFrame> sorted_frames;
        std::vector<OraclePacket> sorted_oracle;
        for (auto i : order) {
            sorted_frames.push_back(frames[i]);
            sorted_oracle.push_back(oracle_pkts[i]);
        }
        auto expected = flow_grouping_oracle(sorted_oracle);
        std::set<std::set<std::uint64_t>> actual;
        for (const auto& f : pcap::assemble_flows(decode(sorted_frames), "dev")) {
            std::set<std::uint64_t> ids;
            for (const auto& p : f.packets)
                ids.insert((std::uint64_t{load_be32(p.payload.data())} << 32) | load_be32(p.payload.data() + 4));
            actual.insert(ids);
        }
        CHECK(actual == expected);
    }
}
