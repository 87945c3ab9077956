#include "iotaudit/enc/classifier.hpp"

#include "iotaudit/core/error.hpp"
#include "iotaudit/core/strings.hpp"
#include "iotaudit/enc/entropy.hpp"
#include "iotaudit/pcap/dns.hpp"
#include "iotaudit/pcap/http.hpp"
#include "iotaudit/pcap/tls_records.hpp"

#include <algorithm>
#include <sstream>

namespace iotaudit::enc {

std::string_view to_string(Verdict v) {
    switch (v) {
    case Verdict::Encrypted: return "ENCRYPTED";
    case Verdict::Text: return "TEXT";
    case Verdict::Media: return "MEDIA";
    case Verdict::Compressed: return "COMPRESSED";
    case Verdict::Unknown: return "UNKNOWN";
    }
    return "UNKNOWN";
}

std::string_view to_string(Rule r) {
    switch (r) {
    case Rule::HttpContentType: return "HTTP_CONTENT_TYPE";
    case Rule::SslEntropy: return "SSL_ENTROPY";
    case Rule::Dnskey: return "DNSKEY";
    case Rule::MagicNumber: return "MAGIC_NUMBER";
    case Rule::EntropyThreshold: return "ENTROPY_THRESHOLD";
    }
    return "ENTROPY_THRESHOLD";
}

std::optional<Verdict> parse_verdict(std::string_view text) {
    for (auto v : {Verdict::Encrypted, Verdict::Text, Verdict::Media, Verdict::Compressed, Verdict::Unknown})
        if (iequals(text, to_string(v))) return v;
    return std::nullopt;
}

Json Thresholds::to_json() const {
    return {{"ssl", ssl}, {"encrypted", encrypted}, {"text", text}, {"window", window}, {"min_payload", min_payload}};
}

std::optional<Verdict> content_type_family(std::string_view content_type, std::string_view content_encoding) {
    auto enc = ascii_lower(trim(content_encoding));
    if (enc == "gzip" || enc == "deflate" || enc == "br" || enc == "compress" || enc == "x-gzip" || enc == "zstd")
        return Verdict::Compressed;
    auto type = ascii_lower(trim(content_type.substr(0, content_type.find(';'))));
    if (type.empty()) return std::nullopt;
    const auto slash = type.find('/');
    const auto top = type.substr(0, slash);
    const auto sub = slash == std::string::npos ? std::string() : type.substr(slash + 1);
    if (top == "text") return Verdict::Text;
    if (top == "image" || top == "audio" || top == "video") return Verdict::Media;
    if (top == "multipart") return Verdict::Text;
    if (top == "application") {
        static const char* compressed[] = {"gzip", "x-gzip", "zip", "x-zip-compressed", "x-bzip2", "x-xz",
                                           "x-7z-compressed", "x-tar", "zstd", "x-compress", "x-rar-compressed"};
        for (auto c : compressed)
            if (sub == c) return Verdict::Compressed;
        static const char* text[] = {"json", "xml", "javascript", "x-javascript", "ecmascript",
                                     "x-www-form-urlencoded", "soap+xml", "xhtml+xml", "problem+json"};
        for (auto t : text)
            if (sub == t) return Verdict::Text;
        if (sub.size() > 5 && (sub.ends_with("+json") || sub.ends_with("+xml"))) return Verdict::Text;
        if (sub == "ogg" || sub == "vnd.apple.mpegurl" || sub == "x-mpegurl" || sub == "dash+xml")
            return Verdict::Media;
    }
    return std::nullopt;
}

namespace {

struct HttpDecision {
    Verdict verdict;
    std::string content_type;
};

std::optional<HttpDecision> http_rule(const pcap::FlowRecord& flow) {
    std::optional<HttpDecision> best;
    std::size_t best_body = 0;
    bool have = false;
    for (const auto& stream : flow.payload) {
        if (!pcap::http::looks_like_http(stream)) continue;
        for (const auto& m : pcap::http::parse_stream(stream)) {
            auto ct = m.header("content-type");
            if (!ct) continue;
            auto fam = content_type_family(*ct, m.header("content-encoding").value_or(""));
            if (!fam) continue;
            if (!have || m.body_length > best_body) {
                best = HttpDecision{*fam, *ct};
                best_body = m.body_length;
                have = true;
            }
        }
    }
    return best;
}

bool dns_has_dnskey(const pcap::FlowRecord& flow) {
    auto check = [](ByteView wire) {
        auto m = pcap::dns::parse_message(wire);
        return m && m->has_record_type(pcap::dns::rrtype::kDnskey);
    };
    if (flow.key.transport == pcap::Transport::Tcp) {
        for (const auto& stream : flow.payload)
            for (auto msg : pcap::dns::split_tcp_stream(stream))
                if (check(msg)) return true;
        return false;
    }
    for (const auto& p : flow.packets)
        if (!p.payload.empty() && check(p.payload)) return true;
    return false;
}

Bytes sample(const pcap::FlowRecord& flow, std::size_t window) {
    Bytes out;
    for (const auto& dir : flow.payload) {
        const auto n = std::min(window, dir.size());
        out.insert(out.end(), dir.begin(), dir.begin() + static_cast<std::ptrdiff_t>(n));
    }
    return out;
}

} // namespace

std::optional<TrafficClassification> classify_flow(const pcap::FlowRecord& flow, const MagicTable& magic,
                                                   const Thresholds& th) {
    if (flow.application_payload_size() == 0) return std::nullopt;
    TrafficClassification c;
    c.key = flow.key;
    c.device_id = flow.device_id;
    c.phase = flow.phase;
    c.wire_bytes = flow.bytes_total;
    c.payload_bytes = flow.payload_bytes_total;

    // 1. HTTP content type
    if (flow.has_tag(pcap::ProtocolTag::Http)) {
        if (auto d = http_rule(flow)) {
            c.verdict = d->verdict;
            c.rule = Rule::HttpContentType;
            c.detail = d->content_type;
            return c;
        }
    }
    // 2. SSL/TLS application records
    if (flow.has_tag(pcap::ProtocolTag::Tls)) {
        const auto& a = flow.payload[0];
        const auto& b = flow.payload[1];
        auto s = pcap::tls::summarize_session(a, b, 2 * th.window);
        c.tls_record_layer = s.record_layer || s.sslv2_framing;
        if (!s.application_data.empty()) {
            const double e = payload_entropy(s.application_data);
            if (e > th.ssl) {
                c.verdict = Verdict::Encrypted;
                c.rule = Rule::SslEntropy;
                c.entropy = e;
                return c;
            }
        }
    }
    // 3. DNSKEY
    if (flow.has_tag(pcap::ProtocolTag::Dns) && dns_has_dnskey(flow)) {
        c.verdict = Verdict::Encrypted;
        c.rule = Rule::Dnskey;
        return c;
    }
    // 4. magic numbers at the start of either direction, larger direction first
    {
        const bool first_larger = flow.payload[0].size() >= flow.payload[1].size();
        for (int k = 0; k < 2; ++k) {
            const auto& dir = flow.payload[(k == 0) == first_larger ? 0 : 1];
            if (dir.empty()) continue;
            if (const auto* m = magic.match(dir)) {
                c.verdict = m->kind == MagicKind::Compressed ? Verdict::Compressed : Verdict::Media;
                c.rule = Rule::MagicNumber;
                c.detail = m->format;
                return c;
            }
        }
    }
    // 5. entropy thresholds
    const auto smp = sample(flow, th.window);
    const double e = payload_entropy(smp);
    c.entropy = e;
    c.rule = Rule::EntropyThreshold;
    if (smp.size() < th.min_payload) {
        c.verdict = Verdict::Unknown;
        c.detail = "short payload";
    } else if (e > th.encrypted) {
        c.verdict = Verdict::Encrypted;
    } else if (e < th.text) {
        c.verdict = Verdict::Text;
    } else {
        c.verdict = Verdict::Unknown;
    }
    return c;
}

ClassificationRun classify_flows(const std::vector<pcap::FlowRecord>& flows, const MagicTable& magic,
                                 const Thresholds& th) {
    ClassificationRun run;
    for (const auto& f : flows) {
        if (auto c = classify_flow(f, magic, th)) run.flows.push_back(std::move(*c));
        else ++run.zero_payload_excluded;
    }
    return run;
}

std::string encryption_csv(const std::vector<TrafficClassification>& rows) {
    std::ostringstream out;
    out << "device_id,flow_key,phase,verdict,entropy,rule,detail,wire_bytes,payload_bytes\n";
    for (const auto& r : rows)
        out << csv_row({r.device_id, r.key.to_string(), r.phase ? std::string(to_string(*r.phase)) : "",
                        std::string(to_string(r.verdict)), r.entropy ? format_fixed(*r.entropy, 6) : "",
                        std::string(to_string(r.rule)), r.detail, std::to_string(r.wire_bytes),
                        std::to_string(r.payload_bytes)})
            << "\n";
    return out.str();
}

} // namespace iotaudit::enc
