#include "iotaudit/pcap/tls_records.hpp"

#include <algorithm>

namespace iotaudit::pcap::tls {

namespace {

bool plausible_header(const std::uint8_t* p) {
    const std::uint8_t type = p[0];
    return type >= content::kChangeCipherSpec && type <= 24 && p[1] == 3 && p[2] <= 4;
}

// SSLv2 record header: high bit set, 15-bit length; a hello follows.
bool plausible_sslv2(ByteView s) {
    if (s.size() < 5 || (s[0] & 0x80) == 0) return false;
    const std::size_t len = ((s[0] & 0x7F) << 8) | s[1];
    const std::uint8_t msg = s[2];
    if (len < 3) return false;
    if (msg == 1) return s[3] == 0 ? s[4] == 2 : s[3] == 3; // client hello: v2 or v3-compatible version
    if (msg == 4) return s.size() >= 7 && load_be16(s.data() + 5) == version::kSsl2;
    return false;
}

struct Reader {
    ByteView b;
    std::size_t pos = 0;
    bool ok = true;

    bool need(std::size_t n) {
        if (pos + n > b.size()) ok = false;
        return ok;
    }
    std::uint8_t u8() { return need(1) ? b[pos++] : 0; }
    std::uint16_t u16() {
        if (!need(2)) return 0;
        const auto v = load_be16(b.data() + pos);
        pos += 2;
        return v;
    }
    std::uint32_t u24() {
        if (!need(3)) return 0;
        const auto v = load_be24(b.data() + pos);
        pos += 3;
        return v;
    }
    ByteView take(std::size_t n) {
        if (!need(n)) return {};
        auto v = b.subspan(pos, n);
        pos += n;
        return v;
    }
};

} // namespace

bool has_record_framing(ByteView s) {
    if (s.size() >= 5 && plausible_header(s.data())) return true;
    return plausible_sslv2(s);
}

RecordScan scan_records(ByteView s) {
    RecordScan scan;
    std::size_t pos = 0;
    if (plausible_sslv2(s)) {
        scan.sslv2_framing = true;
        const std::size_t len = ((s[0] & 0x7F) << 8) | s[1];
        scan.sslv2_msg_type = s[2];
        scan.sslv2_version = scan.sslv2_msg_type == 4 ? load_be16(s.data() + 5) : load_be16(s.data() + 3);
        pos = 2 + len;
        if (pos > s.size()) {
            scan.truncated = true;
            return scan;
        }
    }
    while (pos + 5 <= s.size()) {
        const std::uint8_t* h = s.data() + pos;
        if (!plausible_header(h)) break;
        const std::size_t len = load_be16(h + 3);
        if (len > (1u << 14) + 2048) break;
        if (pos + 5 + len > s.size()) {
            scan.truncated = true;
            scan.records.push_back({h[0], load_be16(h + 1), s.subspan(pos + 5)});
            break;
        }
        scan.records.push_back({h[0], load_be16(h + 1), s.subspan(pos + 5, len)});
        pos += 5 + len;
    }
    return scan;
}

std::vector<HandshakeMessage> handshake_messages(const RecordScan& scan) {
    Bytes buf;
    for (const auto& rec : scan.records) {
        if (rec.type == content::kChangeCipherSpec) break;
        if (rec.type == content::kHandshake) append(buf, rec.body);
    }
    std::vector<HandshakeMessage> out;
    std::size_t pos = 0;
    while (pos + 4 <= buf.size()) {
        const std::size_t len = load_be24(buf.data() + pos + 1);
        if (pos + 4 + len > buf.size()) break;
        out.push_back({buf[pos], Bytes(buf.begin() + static_cast<std::ptrdiff_t>(pos + 4),
                                       buf.begin() + static_cast<std::ptrdiff_t>(pos + 4 + len))});
        pos += 4 + len;
    }
    return out;
}

std::optional<ClientHello> parse_client_hello(ByteView body) {
    Reader r{body};
    ClientHello ch;
    ch.legacy_version = r.u16();
    r.take(32);
    r.take(r.u8());
    const std::uint16_t suites_len = r.u16();
    auto suites = r.take(suites_len);
    for (std::size_t i = 0; i + 1 < suites.size(); i += 2) ch.cipher_suites.push_back(load_be16(suites.data() + i));
    r.take(r.u8());
    if (!r.ok) return std::nullopt;
    if (r.pos + 2 > body.size()) return ch; // no extensions
    Reader ext{r.take(r.u16())};
    while (ext.ok && ext.pos + 4 <= ext.b.size()) {
        const std::uint16_t type = ext.u16();
        Reader data{ext.take(ext.u16())};
        if (type == 0) {
            data.u16();
            while (data.ok && data.pos + 3 <= data.b.size()) {
                const std::uint8_t name_type = data.u8();
                auto name = data.take(data.u16());
                if (data.ok && name_type == 0) {
                    ch.sni = std::string(as_chars(name));
                    break;
                }
            }
        } else if (type == 43) {
            auto list = data.take(data.u8());
            for (std::size_t i = 0; i + 1 < list.size(); i += 2) ch.supported_versions.push_back(load_be16(list.data() + i));
        }
    }
    return ch;
}

std::optional<ServerHello> parse_server_hello(ByteView body) {
    Reader r{body};
    ServerHello sh;
    sh.legacy_version = r.u16();
    r.take(32);
    r.take(r.u8());
    sh.cipher_suite = r.u16();
    r.u8(); // compression
    if (!r.ok) return std::nullopt;
    if (r.pos + 2 > body.size()) return sh;
    Reader ext{r.take(r.u16())};
    while (ext.ok && ext.pos + 4 <= ext.b.size()) {
        const std::uint16_t type = ext.u16();
        Reader data{ext.take(ext.u16())};
        if (type == 43 && data.b.size() >= 2) sh.selected_version = load_be16(data.b.data());
    }
    return sh;
}

std::optional<std::vector<Bytes>> parse_certificate_list(ByteView body) {
    Reader r{body};
    Reader list{r.take(r.u24())};
    if (!r.ok) return std::nullopt;
    std::vector<Bytes> chain;
    while (list.pos < list.b.size()) {
        auto der = list.take(list.u24());
        if (!list.ok) return std::nullopt;
        chain.emplace_back(der.begin(), der.end());
    }
    return chain;
}

bool is_psk_cipher_suite(std::uint16_t s) {
    return (s >= 0x002C && s <= 0x002E) || (s >= 0x008A && s <= 0x0095) || (s >= 0x00A8 && s <= 0x00B9) ||
           (s >= 0xC033 && s <= 0xC03B) || (s >= 0xC064 && s <= 0xC06B) || (s >= 0xC08E && s <= 0xC095) ||
           (s >= 0xC0A4 && s <= 0xC0AB) || (s >= 0xCCAB && s <= 0xCCAE) || (s >= 0xD001 && s <= 0xD005);
}

SessionSummary summarize_session(ByteView forward, ByteView reverse, std::size_t application_cap) {
    SessionSummary out;
    const RecordScan scans[2] = {scan_records(forward), scan_records(reverse)};
    out.record_layer = !scans[0].records.empty() || !scans[1].records.empty() || scans[0].sslv2_framing ||
                       scans[1].sslv2_framing;
    for (const auto& scan : scans) {
        if (!scan.sslv2_framing) continue;
        out.sslv2_framing = true;
        if (scan.sslv2_msg_type == 4) out.sslv2_server_version = scan.sslv2_version;
    }
    for (const auto& scan : scans) {
        for (auto& msg : handshake_messages(scan)) {
            if (msg.type == hs::kClientHello && !out.client_hello) {
                out.client_hello = parse_client_hello(msg.body);
            } else if (msg.type == hs::kServerHello && !out.server_hello) {
                out.server_hello = parse_server_hello(msg.body);
            } else if (msg.type == hs::kCertificate && !out.certificate_message) {
                out.certificate_message = true;
                if (auto chain = parse_certificate_list(msg.body))
                    out.certificate_chain = std::move(*chain);
                else
                    out.certificate_parse_error = true;
            }
        }
        for (const auto& rec : scan.records) {
            if (rec.type != content::kApplicationData) continue;
            ++out.application_records;
            const std::size_t room = application_cap - std::min(application_cap, out.application_data.size());
            const std::size_t take = std::min(room, rec.body.size());
            out.application_data.insert(out.application_data.end(), rec.body.begin(),
                                        rec.body.begin() + static_cast<std::ptrdiff_t>(take));
        }
    }
    return out;
}

Bytes build_record(std::uint8_t type, std::uint16_t ver, ByteView body) {
    Bytes out{type};
    append_be16(out, ver);
    append_be16(out, static_cast<std::uint16_t>(body.size()));
    append(out, body);
    return out;
}

Bytes build_handshake(std::uint8_t type, ByteView body) {
    Bytes out{type};
    append_be24(out, static_cast<std::uint32_t>(body.size()));
    append(out, body);
    return out;
}

Bytes build_client_hello(const std::string& sni, const std::vector<std::uint16_t>& suites,
                         const std::vector<std::uint16_t>& supported_versions) {
    Bytes b;
    append_be16(b, version::kTls12);
    for (int i = 0; i < 32; ++i) b.push_back(static_cast<std::uint8_t>(i * 7 + 1));
    b.push_back(0); // session id
    append_be16(b, static_cast<std::uint16_t>(suites.size() * 2));
    for (auto s : suites) append_be16(b, s);
    b.push_back(1);
    b.push_back(0); // null compression

    Bytes ext;
    if (!sni.empty()) {
        Bytes names;
        names.push_back(0);
        append_be16(names, static_cast<std::uint16_t>(sni.size()));
        append(names, sni);
        append_be16(ext, 0);
        append_be16(ext, static_cast<std::uint16_t>(names.size() + 2));
        append_be16(ext, static_cast<std::uint16_t>(names.size()));
        append(ext, names);
    }
    // supported_groups: x25519, secp256r1, secp384r1
    append_be16(ext, 10);
    append_be16(ext, 8);
    append_be16(ext, 6);
    append_be16(ext, 0x001D);
    append_be16(ext, 0x0017);
    append_be16(ext, 0x0018);
    // ec_point_formats: uncompressed
    append_be16(ext, 11);
    append_be16(ext, 2);
    ext.push_back(1);
    ext.push_back(0);
    // signature_algorithms
    const std::uint16_t sigalgs[] = {0x0804, 0x0403, 0x0401, 0x0805, 0x0503, 0x0501, 0x0201};
    append_be16(ext, 13);
    append_be16(ext, static_cast<std::uint16_t>(2 + sizeof sigalgs));
    append_be16(ext, static_cast<std::uint16_t>(sizeof sigalgs));
    for (auto s : sigalgs) append_be16(ext, s);
    if (!supported_versions.empty()) {
        append_be16(ext, 43);
        append_be16(ext, static_cast<std::uint16_t>(1 + supported_versions.size() * 2));
        ext.push_back(static_cast<std::uint8_t>(supported_versions.size() * 2));
        for (auto v : supported_versions) append_be16(ext, v);
    }
    append_be16(b, static_cast<std::uint16_t>(ext.size()));
    append(b, ext);
    return build_handshake(hs::kClientHello, b);
}

Bytes build_server_hello(std::uint16_t legacy_version, std::uint16_t suite, std::optional<std::uint16_t> supported) {
    Bytes b;
    append_be16(b, legacy_version);
    for (int i = 0; i < 32; ++i) b.push_back(static_cast<std::uint8_t>(0xA0 + i));
    b.push_back(0);
    append_be16(b, suite);
    b.push_back(0);
    if (supported) {
        append_be16(b, 6);
        append_be16(b, 43);
        append_be16(b, 2);
        append_be16(b, *supported);
    }
    return build_handshake(hs::kServerHello, b);
}

Bytes build_certificate(const std::vector<Bytes>& chain) {
    Bytes list;
    for (const auto& der : chain) {
        append_be24(list, static_cast<std::uint32_t>(der.size()));
        append(list, der);
    }
    Bytes b;
    append_be24(b, static_cast<std::uint32_t>(list.size()));
    append(b, list);
    return build_handshake(hs::kCertificate, b);
}

Bytes build_alert(std::uint8_t level, std::uint8_t description, std::uint16_t record_version) {
    const std::uint8_t body[2] = {level, description};
    return build_record(content::kAlert, record_version, body);
}

} // namespace iotaudit::pcap::tls
