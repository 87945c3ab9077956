#include "iotaudit/pcap/dns.hpp"
#include "iotaudit/pcap/dns_map.hpp"
#include "iotaudit/pcap/flow.hpp"
#include "packet_builder.hpp"

#include <doctest.h>

using namespace iotaudit;
using namespace iotaudit::testing;
namespace dns = iotaudit::pcap::dns;

namespace {

dns::ResourceRecord a_record(std::string name, const char* addr) {
    dns::ResourceRecord rr;
    rr.name = std::move(name);
    rr.type = dns::rrtype::kA;
    rr.klass = 1;
    rr.ttl = 60;
    rr.address = ip(addr);
    return rr;
}

dns::ResourceRecord cname(std::string name, std::string target) {
    dns::ResourceRecord rr;
    rr.name = std::move(name);
    rr.type = dns::rrtype::kCname;
    rr.klass = 1;
    rr.target = std::move(target);
    return rr;
}

Bytes response(const std::string& qname, std::vector<dns::ResourceRecord> answers) {
    dns::Message m;
    m.id = 7;
    m.is_response = true;
    m.questions.push_back({qname, dns::rrtype::kA, 1});
    m.answers = std::move(answers);
    return dns::encode_message(m);
}

pcap::DnsMapBuild map_of(const std::vector<Bytes>& responses) {
    std::vector<TimedFrame> frames;
    int t = 1;
    for (const auto& r : responses)
        frames.push_back({Timestamp::from_seconds(t++),
                          udp_frame(ip("8.8.4.4"), 53, ip("192.168.1.2"), static_cast<std::uint16_t>(40000 + t), r,
                                    {kRouterMac, kDeviceMac})});
    auto packets = pcap::parse_capture_bytes(to_pcap(frames), "dev").packets;
    auto flows = pcap::assemble_flows(packets, "dev");
    return pcap::build_dns_map(flows);
}

} // namespace

TEST_CASE("encode and parse round trip with compression-free names") {
    auto wire = response("Dns.Google.com", {a_record("dns.google.com", "8.8.8.8")});
    auto msg = dns::parse_message(wire);
    REQUIRE(msg);
    CHECK(msg->is_response);
    REQUIRE(msg->questions.size() == 1);
    CHECK(msg->questions[0].name == "dns.google.com");
    REQUIRE(msg->answers.size() == 1);
    CHECK(msg->answers[0].address->to_string() == "8.8.8.8");
}

TEST_CASE("compressed names are followed") {
    // Hand-built response: question example.com, answer name is a pointer to offset 12.
    Bytes wire{0x00, 0x01, 0x81, 0x80, 0x00, 0x01, 0x00, 0x01, 0x00, 0x00, 0x00, 0x00};
    append(wire, std::string("\x07" "example" "\x03" "com", 12));
    wire.push_back(0);
    append_be16(wire, 1);
    append_be16(wire, 1);
    append(wire, Bytes{0xC0, 0x0C});
    append_be16(wire, 1);
    append_be16(wire, 1);
    append_be32(wire, 300);
    append_be16(wire, 4);
    append(wire, Bytes{93, 184, 216, 34});
    auto msg = dns::parse_message(wire);
    REQUIRE(msg);
    REQUIRE(msg->answers.size() == 1);
    CHECK(msg->answers[0].name == "example.com");
    CHECK(msg->answers[0].address->to_string() == "93.184.216.34");
}

TEST_CASE("pointer loops are rejected") {
    Bytes wire{0x00, 0x01, 0x81, 0x80, 0x00, 0x01, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xC0, 0x0C, 0x00, 0x01, 0x00, 0x01};
    CHECK_FALSE(dns::parse_message(wire));
}

TEST_CASE("A answer maps the address to the query name") {
    auto built = map_of({response("dns.google.com", {a_record("dns.google.com", "8.8.8.8")})});
    CHECK(built.map.domains(ip("8.8.8.8")) == std::vector<std::string>{"dns.google.com"});
    CHECK(built.responses_parsed == 1);
}

TEST_CASE("CNAME chains resolve back to the asked name") {
    auto built = map_of({response("a.example", {cname("a.example", "b.cdn.net"), a_record("b.cdn.net", "1.2.3.4")})});
    auto names = built.map.domains(ip("1.2.3.4"));
    REQUIRE_FALSE(names.empty());
    CHECK(names.front() == "a.example");
}

TEST_CASE("no DNS traffic yields an empty map and garbage is counted") {
    CHECK(map_of({}).map.empty());
    auto built = map_of({Bytes{0x00, 0x01, 0x81, 0x80, 0x00, 0x05}});
    CHECK(built.map.empty());
    CHECK(built.malformed_skipped == 1);
}

TEST_CASE("TCP DNS streams are split on length prefixes") {
    auto one = response("x.test", {a_record("x.test", "10.0.0.1")});
    Bytes stream;
    for (int i = 0; i < 2; ++i) {
        append_be16(stream, static_cast<std::uint16_t>(one.size()));
        append(stream, one);
    }
    auto parts = dns::split_tcp_stream(stream);
    REQUIRE(parts.size() == 2);
    CHECK(dns::parse_message(parts[1]));
}
