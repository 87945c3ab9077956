#include "cert_factory.hpp"
#include "corpus.hpp"
#include "iotaudit/core/error.hpp"
#include "iotaudit/tls/certificates.hpp"
#include "iotaudit/tls/protocols.hpp"
#include "packet_builder.hpp"
#include "temp_dir.hpp"

#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>

using namespace iotaudit;
using namespace iotaudit::tls;
using namespace iotaudit::testing;

namespace {

const CertFactory& factory() {
    static const CertFactory f;
    return f;
}

std::multiset<std::pair<std::size_t, FindingKind>> finding_multiset(const std::vector<CertificateFinding>& fs,
                                                                    const std::vector<CertificateRecord>& recs) {
    std::map<std::string, std::size_t> chain_of_device;
    for (const auto& r : recs) chain_of_device[r.device_id] = r.chain_id;
    std::multiset<std::pair<std::size_t, FindingKind>> out;
    for (const auto& f : fs) out.insert({chain_of_device.at(f.device_id), f.finding});
    return out;
}

std::vector<CertificateFinding> only(const std::vector<CertificateFinding>& fs, FindingKind k) {
    std::vector<CertificateFinding> out;
    std::copy_if(fs.begin(), fs.end(), std::back_inserter(out), [&](const auto& f) { return f.finding == k; });
    return out;
}

} // namespace

TEST_CASE("negotiated version comes from the ServerHello") {
    TlsSessionSpec s;
    auto v = detect_flow_version(tls_session_flow("d", s), nullptr);
    REQUIRE(v.outcome == VersionOutcome::Detected);
    CHECK(*v.version == ProtocolVersion::Tls12);

    // Record layer and legacy field say 1.2; supported_versions says 1.3.
    s.selected_version = 0x0304;
    v = detect_flow_version(tls_session_flow("d", s), nullptr);
    CHECK(*v.version == ProtocolVersion::Tls13);

    s = {};
    s.legacy_version = 0x0301;
    CHECK(*detect_flow_version(tls_session_flow("d", s), nullptr).version == ProtocolVersion::Tls10);
    s.legacy_version = 0x0300;
    CHECK(*detect_flow_version(tls_session_flow("d", s), nullptr).version == ProtocolVersion::Sslv3);
    CHECK(*detect_flow_version(sslv2_flow("d"), nullptr).version == ProtocolVersion::Sslv2);
    CHECK(*detect_flow_version(ssl_records_only_flow("d"), nullptr).version == ProtocolVersion::SslGeneric);
}

TEST_CASE("truncated handshake is undetermined and tallied") {
    TlsSessionSpec s;
    s.stop_after_client_hello = true;
    auto f = tls_session_flow("d", s);
    CHECK(detect_flow_version(f, nullptr).outcome == VersionOutcome::Undetermined);
    auto inv = detect_protocol_versions({f, tls_session_flow("d", {})});
    CHECK(inv.undetermined.size() == 1);
    CHECK(inv.device_count(kFullLifecycle, ProtocolVersion::Tls12) == 1);
}

TEST_CASE("encrypted flow without records is proprietary; DNSKEY and plaintext are not") {
    auto inv = detect_protocol_versions({proprietary_flow("p"),
                                         synthetic_flow("t", pcap::Transport::Tcp, 80, ascii_text(2000, 3), {})});
    CHECK(inv.devices_using(kFullLifecycle, ProtocolVersion::Proprietary) == std::set<std::string>{"p"});
    CHECK_FALSE(inv.usage.contains("t"));

    enc::TrafficClassification c;
    c.verdict = enc::Verdict::Encrypted;
    c.rule = enc::Rule::Dnskey;
    CHECK(detect_flow_version(proprietary_flow("p"), &c).outcome == VersionOutcome::NotTls);
}

TEST_CASE("full lifecycle is the union of phases") {
    auto a = tls_session_flow("d1", {});
    a.phase = PhaseLabel::Setup;
    auto b = tls_session_flow("d2", {});
    b.phase = PhaseLabel::Idle;
    auto c = tls_session_flow("d2", {});
    c.phase = PhaseLabel::Setup;
    auto inv = detect_protocol_versions({a, b, c});
    CHECK(inv.device_count("SETUP", ProtocolVersion::Tls12) == 2);
    CHECK(inv.device_count("IDLE", ProtocolVersion::Tls12) == 1);
    CHECK(inv.device_count(kFullLifecycle, ProtocolVersion::Tls12) == 2);
    const auto csv = inv.to_csv();
    CHECK(csv.find("d2,IDLE,TLS1.2") != std::string::npos);
    CHECK(csv.find("d1,FULL,TLS1.2") != std::string::npos);
}

TEST_CASE("version fleet reproduces its table") {
    VersionTable t;
    t.columns = {"TLS1.1", "TLS1.2", "SSLv2", "PROPRIETARY"};
    t.rows = {{"SETUP", {1, 5, 2, 1}},
              {"IDLE", {2, 6, 0, 1}},
              {"INTERACTION", {1, 4, 3, 1}},
              {"DELETION", {0, 5, 0, 1}},
              {"FULL", {3, 8, 4, 1}}};
    auto inv = detect_protocol_versions(version_fleet(t, 20));
    const std::map<std::string, ProtocolVersion> col{{"TLS1.1", ProtocolVersion::Tls11},
                                                     {"TLS1.2", ProtocolVersion::Tls12},
                                                     {"SSLv2", ProtocolVersion::Sslv2},
                                                     {"PROPRIETARY", ProtocolVersion::Proprietary}};
    for (const auto& [row, counts] : t.rows)
        for (std::size_t c = 0; c < t.columns.size(); ++c)
            CHECK_MESSAGE(inv.device_count(row, col.at(t.columns[c])) == static_cast<std::size_t>(counts[c]),
                          row << " " << t.columns[c]);
}

TEST_CASE("certificate parsing round-trips fields") {
    const auto der = century_certificate(factory());
    auto r = parse_certificate(der);
    CHECK(r.subject == "CN=ipc.camera.local,O=Camera Vendor");
    CHECK(r.self_issued());
    CHECK(r.signature_algorithm == "sha256WithRSAEncryption");
    CHECK(r.signature_digest == "sha256");
    CHECK(r.public_key.algorithm == "RSA");
    CHECK(r.public_key.size_bits == 2048);
    CHECK(format_iso8601_ms(r.not_after) == "2120-01-01T00:00:00.000Z");
    CHECK(to_der(parse_der(r.der_bytes).get()) == der);
    CHECK(r.fingerprint.size() == 64);
    CHECK_THROWS_AS(parse_certificate(to_bytes("not a certificate")), ParseError);
}

TEST_CASE("2120 self-signed certificate") {
    auto recs = std::vector<CertificateRecord>{parse_certificate(century_certificate(factory()))};
    auto fs = audit_certificates(recs, {}, factory().trust_store());
    REQUIRE(fs.size() == 2);
    std::set<FindingKind> kinds{fs[0].finding, fs[1].finding};
    CHECK(kinds == std::set<FindingKind>{FindingKind::SelfSigned, FindingKind::ExcessiveValidity});
    for (const auto& f : fs)
        if (f.finding == FindingKind::ExcessiveValidity) {
            CHECK(f.detail.find("2120-01-01") != std::string::npos);
            CHECK(f.detail.find("36524 days > 398") != std::string::npos);
        }
}

TEST_CASE("weak signature and key examples") {
    const auto& f = factory();
    CertSpec s;
    s.common_name = "leaf";
    s.not_before = parse_iso8601("2023-01-01T00:00:00Z");
    s.not_after = parse_iso8601("2023-12-01T00:00:00Z");
    s.digest = "SHA1";
    auto inter = make_certificate([] {
        CertSpec c;
        c.common_name = "inter";
        c.is_ca = true;
        c.not_before = parse_iso8601("2020-01-01T00:00:00Z");
        c.not_after = parse_iso8601("2030-01-01T00:00:00Z");
        return c;
    }(), f.rsa2048(), f.trusted_root(), f.trusted_root_key());
    auto leaf = make_certificate(s, f.rsa1024(), inter.get(), f.rsa2048());

    std::vector<CertificateRecord> recs{parse_certificate(to_der(inter.get())), parse_certificate(to_der(leaf.get()))};
    auto fs = audit_certificates(recs, {}, f.trust_store());
    REQUIRE(fs.size() == 2);
    auto ws = only(fs, FindingKind::WeakSignature);
    REQUIRE(ws.size() == 1);
    CHECK(ws[0].detail.find("sha1WithRSAEncryption") != std::string::npos);
    auto wk = only(fs, FindingKind::WeakKey);
    REQUIRE(wk.size() == 1);
    CHECK(wk[0].detail.find("RSA 1024 bits < 2048") != std::string::npos);
    CHECK(wk[0].chain_position == ChainPosition::Leaf);

    // Same chain judged against a store without the root.
    auto untrusted = audit_certificates(recs, {}, TrustStore{});
    CHECK(only(untrusted, FindingKind::SelfSigned).size() == 1);
}

TEST_CASE("chain order and self-signed verdict ignore input order") {
    auto chains = planted_chains(factory(), 30, 11);
    const auto trust = factory().trust_store();
    std::mt19937_64 rng(3);
    for (auto& pc : chains) {
        auto recs = records_for({pc});
        const auto base = finding_multiset(audit_certificates(recs, {}, trust), recs);
        for (int k = 0; k < 3; ++k) {
            std::shuffle(recs.begin(), recs.end(), rng);
            CHECK(finding_multiset(audit_certificates(recs, {}, trust), recs) == base);
        }
        const auto order = chain_order(recs);
        CHECK_FALSE(std::any_of(recs.begin(), recs.end(), [&](const auto& r) {
            return r.issuer == recs[order.front()].subject && !r.self_issued();
        }));
    }
}

TEST_CASE("planted corpus yields exactly the manifest") {
    auto chains = planted_chains(factory(), 200, 2024);
    auto recs = records_for(chains);
    auto fs = audit_certificates(recs, {}, factory().trust_store());
    std::multiset<std::pair<std::size_t, FindingKind>> expected;
    for (std::size_t i = 0; i < chains.size(); ++i)
        for (auto k : chains[i].expected) expected.insert({i, k});
    CHECK(finding_multiset(fs, recs) == expected);
    CHECK(expected.size() > 150); // the generator really plants things
}

TEST_CASE("extraction from flows: positions, PSK model, opaque TLS 1.3") {
    const auto& f = factory();
    auto chains = planted_chains(f, 3, 5);

    TlsSessionSpec with_chain;
    with_chain.chain = chains[0].der;
    TlsSessionSpec psk;
    psk.cipher_suite = 0x00A8;
    TlsSessionSpec v13;
    v13.selected_version = 0x0304;
    TlsSessionSpec broken;
    broken.chain = {to_bytes("garbage garbage garbage")};

    std::vector<pcap::FlowRecord> flows{tls_session_flow("cert-dev", with_chain), tls_session_flow("psk-dev", psk),
                                        tls_session_flow("psk-and-cert", psk), tls_session_flow("v13-dev", v13),
                                        tls_session_flow("broken", broken)};
    TlsSessionSpec other;
    other.chain = chains[1].der;
    flows.push_back(tls_session_flow("psk-and-cert", other));
    auto ex = extract_certificates(flows);

    CHECK(ex.psk_model_devices == std::set<std::string>{"psk-dev"});
    CHECK(ex.certificate_model_devices == std::set<std::string>{"cert-dev", "psk-and-cert"});
    CHECK(ex.cert_opaque_sessions == 1);
    CHECK(ex.cert_opaque_by_device.at("v13-dev") == 1);
    REQUIRE(ex.warnings.size() == 1);
    CHECK(ex.warnings[0].device_id == "broken");

    std::vector<CertificateRecord> first;
    for (const auto& r : ex.records)
        if (r.device_id == "cert-dev") first.push_back(r);
    REQUIRE(first.size() == chains[0].der.size());
    CHECK(first[0].chain_position == ChainPosition::Leaf);
    CHECK(first[0].server_endpoint.sni == "iot.example.com");
    CHECK(first[0].server_endpoint.port == 443);
    if (first.size() > 1) CHECK(first[1].chain_position == ChainPosition::Intermediate);
    if (first.size() == 3) CHECK(first[2].chain_position == ChainPosition::Root);

    const auto line = ex.to_jsonl().substr(0, ex.to_jsonl().find('\n'));
    auto j = Json::parse(line);
    CHECK(base64_decode(j["der_base64"].get<std::string>()) == ex.records[0].der_bytes);
}

TEST_CASE("audit policy file and default trust bundle") {
    auto p = AuditPolicy::load(std::filesystem::path(IOTAUDIT_DATA_DIR) / "audit" / "policy.json");
    CHECK(p.max_validity_days == 398);
    CHECK(p.weak_digests.contains("sha1"));
    CHECK(std::filesystem::exists(p.trust_bundle));
    auto store = TrustStore::load(p.trust_bundle);
    CHECK(store.size() > 50);
    CHECK_THROWS_AS(AuditPolicy::from_json(Json{{"min_rsa_bits", 0}}), ValidationError);

    TempDir dir;
    std::ofstream(dir.path() / "empty.pem") << "";
    CHECK_THROWS_AS(TrustStore::load(dir.path() / "empty.pem"), ValidationError);
}

TEST_CASE("finding table counts devices per column and phase") {
    std::vector<CertificateFinding> fs{{"a", PhaseLabel::Setup, "e", FindingKind::WeakKey, "", "", ChainPosition::Leaf},
                                       {"a", PhaseLabel::Idle, "e", FindingKind::WeakKey, "", "", ChainPosition::Leaf},
                                       {"b", PhaseLabel::Setup, "e", FindingKind::WeakKey, "", "", ChainPosition::Leaf}};
    auto t = finding_table(fs, [](const std::string&) { return std::string("camera"); });
    CHECK(t["WEAK_KEY"]["camera"]["SETUP"] == 2);
    CHECK(t["WEAK_KEY"]["camera"]["IDLE"] == 1);
    CHECK(t["WEAK_KEY"]["camera"]["FULL"] == 2);
}
