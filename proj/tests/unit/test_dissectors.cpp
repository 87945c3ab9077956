#include "iotaudit/pcap/http.hpp"
#include "iotaudit/pcap/tls_records.hpp"

#include <doctest.h>

using namespace iotaudit;
namespace http = iotaudit::pcap::http;
namespace tls = iotaudit::pcap::tls;

TEST_CASE("HTTP request and chunked response") {
    auto req = to_bytes("POST /api/v1/bind?sn=1 HTTP/1.1\r\nHost: iot.example\r\nContent-Length: 5\r\n\r\nhello"
                        "GET /x HTTP/1.1\r\nHost: iot.example\r\n\r\n");
    auto msgs = http::parse_stream(req);
    REQUIRE(msgs.size() == 2);
    CHECK(msgs[0].is_request);
    CHECK(msgs[0].method == "POST");
    CHECK(msgs[0].target == "/api/v1/bind?sn=1");
    CHECK(msgs[0].header("host") == "iot.example");
    CHECK(http::body_bytes(req, msgs[0]) == to_bytes("hello"));
    CHECK(msgs[1].method == "GET");

    auto resp = to_bytes("HTTP/1.1 200 OK\r\nTransfer-Encoding: chunked\r\nContent-Type: text/plain\r\n\r\n"
                         "3\r\nabc\r\n2\r\nde\r\n0\r\n\r\n");
    auto r = http::parse_stream(resp);
    REQUIRE(r.size() == 1);
    CHECK(r[0].status == 200);
    CHECK(http::body_bytes(resp, r[0]) == to_bytes("abcde"));
    CHECK(http::looks_like_http(resp));
    CHECK_FALSE(http::looks_like_http(to_bytes("\x16\x03\x01\x00\x10")));
}

TEST_CASE("ClientHello round trip keeps SNI and suites") {
    auto hello = tls::build_client_hello("device.example.com", {0xC02F, 0x009C}, {0x0304, 0x0303});
    auto record = tls::build_record(tls::content::kHandshake, tls::version::kTls10, hello);
    CHECK(tls::has_record_framing(record));
    auto scan = tls::scan_records(record);
    REQUIRE(scan.records.size() == 1);
    auto msgs = tls::handshake_messages(scan);
    REQUIRE(msgs.size() == 1);
    auto ch = tls::parse_client_hello(msgs[0].body);
    REQUIRE(ch);
    CHECK(ch->sni == "device.example.com");
    CHECK(ch->cipher_suites == std::vector<std::uint16_t>{0xC02F, 0x009C});
    CHECK(ch->supported_versions == std::vector<std::uint16_t>{0x0304, 0x0303});
}

TEST_CASE("supported_versions in ServerHello overrides the legacy field") {
    auto sh = tls::build_server_hello(tls::version::kTls12, 0x1301, tls::version::kTls13);
    auto parsed = tls::parse_server_hello(Bytes(sh.begin() + 4, sh.end()));
    REQUIRE(parsed);
    CHECK(parsed->legacy_version == 0x0303);
    CHECK(parsed->negotiated_version() == 0x0304);
    auto plain = tls::build_server_hello(tls::version::kTls12, 0xC02F);
    CHECK(tls::parse_server_hello(Bytes(plain.begin() + 4, plain.end()))->negotiated_version() == 0x0303);
}

TEST_CASE("session summary finds client side and counts application records") {
    Bytes client = tls::build_record(tls::content::kHandshake, tls::version::kTls12,
                                     tls::build_client_hello("a.test", {0xC02F}));
    Bytes server = tls::build_record(tls::content::kHandshake, tls::version::kTls12,
                                     tls::build_server_hello(tls::version::kTls12, 0xC02F));
    append(server, tls::build_record(tls::content::kHandshake, tls::version::kTls12, tls::build_certificate({})));
    append(client, tls::build_record(tls::content::kApplicationData, tls::version::kTls12, Bytes(40, 0x5A)));
    // Reverse argument order on purpose.
    auto s = tls::summarize_session(server, client);
    CHECK(s.record_layer);
    REQUIRE(s.client_hello);
    CHECK(s.client_hello->sni == "a.test");
    REQUIRE(s.server_hello);
    CHECK(s.certificate_message);
    CHECK(s.application_records == 1);
    CHECK(s.application_data.size() == 40);
}

TEST_CASE("truncated record is flagged") {
    auto rec = tls::build_record(tls::content::kApplicationData, tls::version::kTls12, Bytes(100, 1));
    rec.resize(50);
    auto scan = tls::scan_records(rec);
    CHECK(scan.truncated);
    CHECK_FALSE(tls::has_record_framing(to_bytes("GET / HTTP/1.1\r\n")));
}

TEST_CASE("PSK suites are recognised") {
    CHECK(tls::is_psk_cipher_suite(0x00A8));
    CHECK_FALSE(tls::is_psk_cipher_suite(0xC02F));
}
