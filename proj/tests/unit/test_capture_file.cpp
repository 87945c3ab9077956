#include "iotaudit/core/error.hpp"
#include "iotaudit/pcap/capture_file.hpp"
#include "iotaudit/pcap/packet.hpp"
#include "packet_builder.hpp"

#include <doctest.h>

using namespace iotaudit;
using namespace iotaudit::testing;

namespace {

// Hand-assembled pcapng: SHB, one IDB (Ethernet, microseconds), EPBs.
Bytes make_pcapng(const std::vector<TimedFrame>& frames) {
    Bytes out;
    auto block = [&](std::uint32_t type, const Bytes& body) {
        const auto padded = (body.size() + 3) & ~std::size_t{3};
        append_le32(out, type);
        append_le32(out, static_cast<std::uint32_t>(12 + padded));
        append(out, body);
        out.insert(out.end(), padded - body.size(), 0);
        append_le32(out, static_cast<std::uint32_t>(12 + padded));
    };
    Bytes shb;
    append_le32(shb, 0x1A2B3C4D);
    append_le16(shb, 1);
    append_le16(shb, 0);
    append_le32(shb, 0xFFFFFFFF);
    append_le32(shb, 0xFFFFFFFF);
    block(0x0A0D0D0A, shb);
    Bytes idb;
    append_le16(idb, 1);
    append_le16(idb, 0);
    append_le32(idb, 65535);
    block(1, idb);
    for (const auto& f : frames) {
        Bytes epb;
        append_le32(epb, 0);
        const auto ts = static_cast<std::uint64_t>(f.ts.micros);
        append_le32(epb, static_cast<std::uint32_t>(ts >> 32));
        append_le32(epb, static_cast<std::uint32_t>(ts));
        append_le32(epb, static_cast<std::uint32_t>(f.frame.size()));
        append_le32(epb, static_cast<std::uint32_t>(f.frame.size()));
        append(epb, f.frame);
        block(6, epb);
    }
    return out;
}

std::vector<TimedFrame> three_udp() {
    std::vector<TimedFrame> frames;
    for (int i = 0; i < 3; ++i) {
        const Bytes payload = to_bytes("hello" + std::to_string(i));
        frames.push_back({Timestamp::from_seconds(1 + i), udp_frame(ip("192.168.1.10"), 5000, ip("8.8.8.8"), 9999, payload)});
    }
    return frames;
}

} // namespace

TEST_CASE("empty pcap parses to no records") {
    pcap::PcapWriter w;
    auto file = pcap::CaptureFile::from_bytes(w.bytes());
    CHECK(file.format() == pcap::CaptureFormat::Pcap);
    CHECK(file.records().empty());
    CHECK_FALSE(file.truncated_tail());
}

TEST_CASE("unknown magic is a hard error") {
    CHECK_THROWS_AS(pcap::CaptureFile::from_bytes(Bytes{1, 2, 3, 4, 5, 6, 7, 8}), ParseError);
}

TEST_CASE("pcapng with Ethernet EPBs decodes like pcap") {
    auto frames = three_udp();
    auto ng = pcap::CaptureFile::from_bytes(make_pcapng(frames));
    CHECK(ng.format() == pcap::CaptureFormat::PcapNg);
    REQUIRE(ng.records().size() == 3);
    CHECK(ng.records()[1].timestamp == Timestamp::from_seconds(2));
    auto parsed = pcap::parse_capture_bytes(make_pcapng(frames), "dev");
    CHECK(parsed.packets.size() == 3);
}

TEST_CASE("big-endian nanosecond pcap header is understood") {
    Bytes data;
    append_be32(data, 0xA1B23C4D);
    append_be16(data, 2);
    append_be16(data, 4);
    append_be32(data, 0);
    append_be32(data, 0);
    append_be32(data, 65535);
    append_be32(data, 1);
    const auto frame = three_udp()[0].frame;
    append_be32(data, 10);
    append_be32(data, 500'000'000);
    append_be32(data, static_cast<std::uint32_t>(frame.size()));
    append_be32(data, static_cast<std::uint32_t>(frame.size()));
    append(data, frame);
    auto file = pcap::CaptureFile::from_bytes(data);
    REQUIRE(file.records().size() == 1);
    CHECK(file.records()[0].timestamp.micros == 10'500'000);
}

TEST_CASE("truncated final record is dropped with a warning") {
    Bytes data = to_pcap(three_udp());
    data.resize(data.size() - 5);
    auto file = pcap::CaptureFile::from_bytes(data);
    CHECK(file.records().size() == 2);
    CHECK(file.truncated_tail());
    CHECK_FALSE(file.warnings().empty());
}

TEST_CASE("write_subset keeps file format and selected records verbatim") {
    const auto frames = three_udp();
    for (Bytes src : {to_pcap(frames), make_pcapng(frames)}) {
        auto file = pcap::CaptureFile::from_bytes(src);
        const Bytes subset = file.write_subset({true, false, true});
        auto back = pcap::CaptureFile::from_bytes(subset);
        CHECK(back.format() == file.format());
        REQUIRE(back.records().size() == 2);
        CHECK(back.records()[1].timestamp == Timestamp::from_seconds(3));
        CHECK(file.write_subset({true, true, true}) == src);
    }
}
