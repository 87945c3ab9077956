#include "corpus.hpp"

#include "iotaudit/pcap/tls_records.hpp"
#include "packet_builder.hpp"

namespace iotaudit::testing {

namespace tls = pcap::tls;

pcap::FlowRecord synthetic_flow(const std::string& device_id, pcap::Transport transport, std::uint16_t server_port,
                                Bytes c2s, Bytes s2c, std::uint32_t server_host) {
    pcap::FlowRecord f;
    f.device_id = device_id;
    f.initiator = {ip("192.168.1.50"), 40000};
    f.responder = {IpAddress::v4(0x2F640000u + server_host), server_port};
    f.device_is_initiator = true;
    f.key.transport = transport;
    f.key.ip_protocol = transport == pcap::Transport::Tcp ? 6 : 17;
    f.key.low = std::min(f.initiator, f.responder);
    f.key.high = std::max(f.initiator, f.responder);
    f.payload_bytes_total = c2s.size() + s2c.size();
    f.bytes_total = f.payload_bytes_total + 54 * (2 + f.payload_bytes_total / 1400);
    f.payload[0] = std::move(c2s);
    f.payload[1] = std::move(s2c);
    f.protocol_tags = pcap::detect_protocols(f);
    return f;
}

namespace {

/// Telemetry-style JSON lines with varying numbers.
Bytes json_lines(std::size_t records, std::uint64_t seed) {
    std::string text;
    auto r = random_bytes(records * 6, seed);
    for (std::size_t i = 0; i < records; ++i) {
        const auto* v = r.data() + i * 6;
        text += "{\"did\":\"" + std::to_string(100000 + v[0] * 97 + v[1]) + "\",\"method\":\"props\",\"params\":{\"temp\":" +
                std::to_string(v[2] % 40) + "." + std::to_string(v[3] % 10) + ",\"humidity\":" + std::to_string(v[4] % 100) +
                ",\"power\":\"" + (v[5] & 1 ? "on" : "off") + "\"},\"id\":" + std::to_string(i) + "}\n";
    }
    return to_bytes(text);
}

} // namespace

std::vector<LabeledFlow> labeled_corpus(std::size_t per_kind, std::uint64_t seed) {
    std::vector<LabeledFlow> out;
    std::uint64_t s = seed;
    auto next = [&] { return ++s * 0x9E3779B97F4A7C15ULL; };
    auto size_in = [&](std::size_t lo, std::size_t hi) { return lo + random_bytes(8, next())[0] * (hi - lo) / 255; };
    const auto t = pcap::Transport::Tcp;
    for (std::size_t i = 0; i < per_kind; ++i) {
        out.push_back({"random", "ENCRYPTED", "ENTROPY_THRESHOLD",
                       synthetic_flow("dev", pcap::Transport::Udp, 9000, random_bytes(size_in(1024, 8192), next()),
                                      random_bytes(size_in(1024, 4096), next()))});

        out.push_back({"ascii", "TEXT", "ENTROPY_THRESHOLD",
                       synthetic_flow("dev", t, 8883, ascii_text(size_in(256, 4096), next()),
                                      ascii_text(size_in(256, 2048), next()))});

        out.push_back({"gzip", "COMPRESSED", "MAGIC_NUMBER",
                       synthetic_flow("dev", t, 7000, gzip_compress(json_lines(size_in(40, 400), next())),
                                      {})});

        Bytes jpeg{0xFF, 0xD8, 0xFF, 0xE0, 0x00, 0x10, 'J', 'F', 'I', 'F', 0x00, 0x01, 0x01};
        append(jpeg, random_bytes(size_in(2048, 16384), next()));
        append(jpeg, Bytes{0xFF, 0xD9});
        out.push_back({"jpeg", "MEDIA", "MAGIC_NUMBER", synthetic_flow("dev", t, 5000, std::move(jpeg), {})});

        Bytes client = tls::build_record(tls::content::kHandshake, tls::version::kTls10,
                                         tls::build_client_hello("iot.example.com", {0xC02F, 0xC030}));
        Bytes server = tls::build_record(tls::content::kHandshake, tls::version::kTls12,
                                         tls::build_server_hello(tls::version::kTls12, 0xC02F));
        const auto records = size_in(2, 8);
        for (std::size_t r = 0; r < records; ++r) {
            append(client, tls::build_record(tls::content::kApplicationData, tls::version::kTls12,
                                             random_bytes(size_in(200, 1400), next())));
            append(server, tls::build_record(tls::content::kApplicationData, tls::version::kTls12,
                                             random_bytes(size_in(200, 1400), next())));
        }
        out.push_back({"tls", "ENCRYPTED", "SSL_ENTROPY",
                       synthetic_flow("dev", t, 443, std::move(client), std::move(server))});
    }
    return out;
}

} // namespace iotaudit::testing

namespace iotaudit::testing {

pcap::FlowRecord tls_session_flow(const std::string& device_id, const TlsSessionSpec& spec,
                                  std::uint32_t server_host, std::uint64_t seed) {
    namespace t = pcap::tls;
    Bytes c2s = t::build_record(t::content::kHandshake, t::version::kTls10,
                                t::build_client_hello(spec.sni, {spec.cipher_suite, 0xC030, 0x00A8}));
    Bytes s2c;
    if (!spec.stop_after_client_hello) {
        Bytes hs = t::build_server_hello(spec.legacy_version, spec.cipher_suite, spec.selected_version);
        if (!spec.chain.empty()) append(hs, t::build_certificate(spec.chain));
        append(hs, t::build_handshake(t::hs::kServerHelloDone, {}));
        append(s2c, t::build_record(t::content::kHandshake, spec.legacy_version, hs));
        for (std::size_t i = 0; i < spec.app_records; ++i) {
            append(c2s, t::build_record(t::content::kApplicationData, t::version::kTls12,
                                        random_bytes(600, seed * 31 + i)));
            append(s2c, t::build_record(t::content::kApplicationData, t::version::kTls12,
                                        random_bytes(900, seed * 37 + i)));
        }
    }
    return synthetic_flow(device_id, pcap::Transport::Tcp, 443, std::move(c2s), std::move(s2c), server_host);
}

pcap::FlowRecord sslv2_flow(const std::string& device_id, std::uint32_t server_host) {
    // CLIENT-HELLO: type 1, version 0x0002, 3-byte cipher specs, challenge.
    Bytes hello{0x01, 0x00, 0x02, 0x00, 0x03, 0x00, 0x00, 0x00, 0x10, 0x07, 0x00, 0xC0};
    append(hello, random_bytes(16, 5));
    Bytes c2s{static_cast<std::uint8_t>(0x80 | (hello.size() >> 8)), static_cast<std::uint8_t>(hello.size())};
    append(c2s, hello);
    // SERVER-HELLO: type 4, session-id-hit, cert type, version 0x0002, lengths.
    Bytes sh{0x04, 0x00, 0x01, 0x00, 0x02, 0x00, 0x00, 0x00, 0x03, 0x00, 0x10, 0x07, 0x00, 0xC0};
    append(sh, random_bytes(16, 6));
    Bytes s2c{static_cast<std::uint8_t>(0x80 | (sh.size() >> 8)), static_cast<std::uint8_t>(sh.size())};
    append(s2c, sh);
    return synthetic_flow(device_id, pcap::Transport::Tcp, 443, std::move(c2s), std::move(s2c), server_host);
}

pcap::FlowRecord ssl_records_only_flow(const std::string& device_id, std::uint32_t server_host, std::uint64_t seed) {
    namespace t = pcap::tls;
    Bytes c2s, s2c;
    for (int i = 0; i < 3; ++i) {
        append(c2s, t::build_record(t::content::kApplicationData, t::version::kTls10, random_bytes(700, seed + i)));
        append(s2c, t::build_record(t::content::kApplicationData, t::version::kTls10, random_bytes(900, seed + 50 + i)));
    }
    return synthetic_flow(device_id, pcap::Transport::Tcp, 443, std::move(c2s), std::move(s2c), server_host);
}

pcap::FlowRecord proprietary_flow(const std::string& device_id, std::uint32_t server_host, std::uint64_t seed) {
    return synthetic_flow(device_id, pcap::Transport::Udp, 8600, random_bytes(3000, seed), random_bytes(2000, seed + 1),
                          server_host);
}

std::vector<pcap::FlowRecord> version_fleet(const VersionTable& table, std::size_t devices) {
    const std::vector<std::pair<std::string, PhaseLabel>> phases{{"SETUP", PhaseLabel::Setup},
                                                                 {"IDLE", PhaseLabel::Idle},
                                                                 {"INTERACTION", PhaseLabel::Interaction},
                                                                 {"DELETION", PhaseLabel::Deletion}};
    std::vector<pcap::FlowRecord> out;
    std::uint64_t seed = 100;
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
        const auto& col = table.columns[c];
        const int full = table.rows.at("FULL")[c];
        const std::size_t base = c * 11; // spread columns over the device list
        int cursor = 0;
        for (const auto& [row, phase] : phases) {
            const int n = table.rows.at(row)[c];
            for (int k = 0; k < n; ++k) {
                const std::size_t idx = (base + static_cast<std::size_t>((cursor + k) % full)) % devices;
                const std::string dev = "dev-" + std::to_string(idx);
                pcap::FlowRecord f;
                ++seed;
                if (col == "TLS1.0" || col == "TLS1.1" || col == "TLS1.2") {
                    TlsSessionSpec s;
                    s.legacy_version = col == "TLS1.0" ? 0x0301 : col == "TLS1.1" ? 0x0302 : 0x0303;
                    f = tls_session_flow(dev, s, 1, seed);
                } else if (col == "TLS1.3") {
                    TlsSessionSpec s;
                    s.selected_version = 0x0304;
                    f = tls_session_flow(dev, s, 1, seed);
                } else if (col == "SSLv3") {
                    TlsSessionSpec s;
                    s.legacy_version = 0x0300;
                    f = tls_session_flow(dev, s, 1, seed);
                } else if (col == "SSL") {
                    f = ssl_records_only_flow(dev, 1, seed);
                } else if (col == "SSLv2") {
                    f = sslv2_flow(dev, 1);
                } else {
                    f = proprietary_flow(dev, 1, seed);
                }
                f.phase = phase;
                out.push_back(std::move(f));
            }
            cursor += n;
        }
    }
    return out;
}

} // namespace iotaudit::testing
