#include "corpus.hpp"
#include "iotaudit/core/error.hpp"
#include "iotaudit/enc/classifier.hpp"
#include "iotaudit/enc/entropy.hpp"
#include "iotaudit/enc/heatmap.hpp"
#include "iotaudit/pcap/dns.hpp"
#include "iotaudit/pcap/tls_records.hpp"
#include "oracles.hpp"
#include "packet_builder.hpp"

#include <doctest.h>

#include <random>

using namespace iotaudit;
using namespace iotaudit::enc;
using namespace iotaudit::testing;

namespace {

template <std::size_t N>
Bytes lit(const char (&s)[N]) {
    return Bytes(s, s + N - 1);
}

pcap::FlowRecord tcp_flow(Bytes c2s, Bytes s2c, std::uint16_t port = 7000) {
    return synthetic_flow("dev", pcap::Transport::Tcp, port, std::move(c2s), std::move(s2c));
}

TrafficClassification cls(const std::string& device, PhaseLabel phase, Verdict v, std::uint64_t bytes) {
    TrafficClassification c;
    c.device_id = device;
    c.phase = phase;
    c.verdict = v;
    c.wire_bytes = bytes;
    c.payload_bytes = bytes;
    return c;
}

} // namespace

TEST_CASE("entropy anchors") {
    CHECK(payload_entropy(Bytes(1024, 0)) == 0.0);
    Bytes all(256);
    for (int i = 0; i < 256; ++i) all[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i);
    CHECK(payload_entropy(all) == 1.0);
    CHECK(payload_entropy(to_bytes("aabb")) == 0.125);
    CHECK_THROWS_AS(payload_entropy({}), PreconditionError);
}

TEST_CASE("entropy matches the oracle and is invariant under self-concatenation") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 200; ++i) {
        auto p = random_bytes(1 + rng() % 3000, rng());
        const auto alphabet = 1 + rng() % 256;
        for (auto& b : p) b = static_cast<std::uint8_t>(b % alphabet);
        const double e = payload_entropy(p);
        CHECK(std::abs(e - entropy_oracle(p)) <= 1e-12);
        CHECK(e >= 0.0);
        CHECK(e <= 1.0);
        Bytes twice = p;
        append(twice, p);
        CHECK(std::abs(payload_entropy(twice) - e) <= 1e-12);
    }
}

TEST_CASE("magic table: longest match wins") {
    const auto& t = MagicTable::builtin();
    CHECK(t.version() == "magic-v1");
    Bytes wav = lit("RIFF\x10\x00\x00\x00WAVEfmt ");
    REQUIRE(t.match(wav));
    CHECK(t.match(wav)->format == "wav");
    Bytes riff = lit("RIFF\x10\x00\x00\x00XXXX");
    CHECK(t.match(riff)->format == "riff");
    Bytes mp4 = lit("\x00\x00\x00\x18""ftypisom");
    CHECK(t.match(mp4)->format == "mp4");
    CHECK(t.match(to_bytes("hello")) == nullptr);
    CHECK_THROWS_AS(MagicTable("x", {MagicEntry{"empty", MagicKind::Media, {}}}), ValidationError);
}

TEST_CASE("HTTP content types decide first") {
    auto resp = to_bytes("HTTP/1.1 200 OK\r\nContent-Type: text/html; charset=utf-8\r\nContent-Length: 5\r\n\r\nhello");
    auto req = to_bytes("GET / HTTP/1.1\r\nHost: a\r\n\r\n");
    auto c = classify_flow(tcp_flow(req, resp, 80));
    REQUIRE(c);
    CHECK(c->verdict == Verdict::Text);
    CHECK(c->rule == Rule::HttpContentType);

    Bytes body = random_bytes(4000, 3);
    auto img = to_bytes("HTTP/1.1 200 OK\r\nContent-Type: image/jpeg\r\nContent-Length: 4000\r\n\r\n");
    append(img, body);
    CHECK(classify_flow(tcp_flow(req, img, 80))->verdict == Verdict::Media);

    CHECK(content_type_family("application/json") == Verdict::Text);
    CHECK(content_type_family("application/json", "gzip") == Verdict::Compressed);
    CHECK(content_type_family("application/zip") == Verdict::Compressed);
    CHECK(content_type_family("video/mp4") == Verdict::Media);
    CHECK_FALSE(content_type_family("application/octet-stream"));

    // octet-stream falls through to the later stages
    auto bin = to_bytes("HTTP/1.1 200 OK\r\nContent-Type: application/octet-stream\r\nContent-Length: 4000\r\n\r\n");
    append(bin, body);
    auto fell = classify_flow(tcp_flow(req, bin, 80));
    CHECK(fell->rule == Rule::EntropyThreshold);
}

TEST_CASE("gzip magic beats entropy") {
    std::string text;
    for (int i = 0; i < 300; ++i) text += "{\"seq\":" + std::to_string(i * 7919 % 10007) + ",\"state\":\"idle\"}\n";
    auto gz = gzip_compress(to_bytes(text));
    REQUIRE(gz.size() > 64);
    CHECK(payload_entropy(gz) > 0.9);
    auto c = classify_flow(tcp_flow(gz, {}));
    CHECK(c->verdict == Verdict::Compressed);
    CHECK(c->rule == Rule::MagicNumber);
    CHECK(c->detail == "gzip");

    // prepending a gzip signature to anything yields COMPRESSED
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Bytes p{0x1F, 0x8B};
        append(p, random_bytes(500 + seed * 37, seed));
        CHECK(classify_flow(tcp_flow(p, {}))->verdict == Verdict::Compressed);
    }
}

TEST_CASE("TLS application data entropy and fall-through") {
    namespace tls = pcap::tls;
    Bytes client = tls::build_record(tls::content::kHandshake, tls::version::kTls12, tls::build_client_hello("a", {0xC02F}));
    Bytes low = client;
    append(client, tls::build_record(tls::content::kApplicationData, tls::version::kTls12, random_bytes(3000, 1)));
    auto c = classify_flow(tcp_flow(client, {}, 443));
    CHECK(c->verdict == Verdict::Encrypted);
    CHECK(c->rule == Rule::SslEntropy);
    CHECK(*c->entropy > 0.8);
    CHECK(c->tls_record_layer);

    append(low, tls::build_record(tls::content::kApplicationData, tls::version::kTls12, ascii_text(3000, 1)));
    auto f = classify_flow(tcp_flow(low, {}, 443));
    CHECK(f->rule == Rule::EntropyThreshold);
}

TEST_CASE("DNSKEY answers count as encrypted") {
    pcap::dns::Message m;
    m.id = 1;
    m.is_response = true;
    m.questions.push_back({"example.com", pcap::dns::rrtype::kDnskey, 1});
    pcap::dns::ResourceRecord rr;
    rr.name = "example.com";
    rr.type = pcap::dns::rrtype::kDnskey;
    rr.klass = 1;
    rr.rdata_length = 68;
    m.answers.push_back(rr);
    auto wire = pcap::dns::encode_message(m);
    std::vector<TimedFrame> frames{{Timestamp::from_seconds(1), udp_frame(ip("8.8.8.8"), 53, ip("192.168.1.2"), 5353, wire,
                                                                          {kRouterMac, kDeviceMac})}};
    auto packets = pcap::parse_capture_bytes(to_pcap(frames), "dev").packets;
    auto flows = pcap::assemble_flows(packets, "dev");
    REQUIRE(flows.size() == 1);
    auto c = classify_flow(flows[0]);
    CHECK(c->verdict == Verdict::Encrypted);
    CHECK(c->rule == Rule::Dnskey);
}

TEST_CASE("final stage thresholds, short floor and zero payload") {
    auto rnd = classify_flow(tcp_flow(random_bytes(4096, 9), {}));
    CHECK(rnd->verdict == Verdict::Encrypted);
    auto txt = classify_flow(tcp_flow(ascii_text(2048, 9), {}));
    CHECK(txt->verdict == Verdict::Text);
    auto short_rnd = classify_flow(tcp_flow(random_bytes(40, 9), {}));
    CHECK(short_rnd->verdict == Verdict::Unknown);
    CHECK(short_rnd->entropy);

    // Ordinary JSON sits between the text and encrypted thresholds.
    std::string json;
    for (int i = 0; i < 40; ++i) json += R"({"deviceId":"a81c)" + std::to_string(i) + R"(","status":"online","rssi":-61})";
    auto j = classify_flow(tcp_flow(to_bytes(json), {}));
    CHECK(j->verdict == Verdict::Unknown);
    CHECK(*j->entropy > 0.4);

    Thresholds loose;
    loose.text = 0.7;
    CHECK(classify_flow(tcp_flow(to_bytes(json), {}), MagicTable::builtin(), loose)->verdict == Verdict::Text);

    auto empty = synthetic_flow("dev", pcap::Transport::Tcp, 1, {}, {});
    CHECK_FALSE(classify_flow(empty));
    auto run = classify_flows({empty, tcp_flow(random_bytes(100, 1), {})});
    CHECK(run.zero_payload_excluded == 1);
    CHECK(run.flows.size() == 1);
}

TEST_CASE("labeled corpus accuracy and rule attribution") {
    auto corpus = labeled_corpus(100, 42);
    std::size_t correct = 0, rule_ok = 0;
    for (const auto& lf : corpus) {
        auto c = classify_flow(lf.flow);
        REQUIRE(c);
        correct += to_string(c->verdict) == lf.verdict;
        rule_ok += to_string(c->rule) == lf.rule;
    }
    CHECK(correct == corpus.size());
    CHECK(rule_ok == corpus.size());
}

TEST_CASE("heatmap cells") {
    std::map<std::string, std::string> cats{{"a", "plug"}, {"b", "plug"}, {"c", "camera"}};
    auto h = encryption_heatmap({cls("a", PhaseLabel::Setup, Verdict::Encrypted, 100),
                                 cls("b", PhaseLabel::Setup, Verdict::Unknown, 5),
                                 cls("c", PhaseLabel::Idle, Verdict::Encrypted, 10)},
                                cats);
    auto plug = h.at("plug", "SETUP");
    REQUIRE(plug);
    CHECK(plug->encrypted == 50.0);
    CHECK(plug->unknown == 50.0);
    CHECK(plug->unencrypted == 0.0);
    CHECK(h.at("camera", "IDLE")->encrypted == 100.0);
    CHECK_FALSE(h.at("camera", "SETUP"));
    CHECK(h.to_json()["camera"]["SETUP"].is_null());

    auto mixed = encryption_heatmap({cls("a", PhaseLabel::Idle, Verdict::Encrypted, 30),
                                     cls("a", PhaseLabel::Idle, Verdict::Text, 10),
                                     cls("a", PhaseLabel::Idle, Verdict::Media, 10),
                                     cls("a", PhaseLabel::Idle, Verdict::Unknown, 50)},
                                    {{"a", "plug"}});
    auto cell = *mixed.at("plug", "FULL");
    CHECK(cell.encrypted + cell.unknown + cell.unencrypted == doctest::Approx(100.0).epsilon(1e-6));
    CHECK(cell.unencrypted == doctest::Approx(20.0));
}
