#include "iotaudit/pii/scanner.hpp"

#include "iotaudit/core/error.hpp"
#include "iotaudit/core/strings.hpp"
#include "iotaudit/pcap/http.hpp"

#include <iconv.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cstring>
#include <fstream>
#include <thread>

namespace iotaudit::pii {

namespace {

constexpr std::string_view kReplacement = "\xEF\xBF\xBD";

/// Length of the well-formed UTF-8 sequence at `p`, 0 if malformed.
std::size_t utf8_sequence(const std::uint8_t* p, std::size_t avail) {
    const std::uint8_t b = p[0];
    if (b < 0x80) return 1;
    std::size_t n;
    std::uint8_t lo = 0x80, hi = 0xBF;
    if (b >= 0xC2 && b <= 0xDF) n = 2;
    else if (b >= 0xE0 && b <= 0xEF) {
        n = 3;
        if (b == 0xE0) lo = 0xA0;
        if (b == 0xED) hi = 0x9F;
    } else if (b >= 0xF0 && b <= 0xF4) {
        n = 4;
        if (b == 0xF0) lo = 0x90;
        if (b == 0xF4) hi = 0x8F;
    } else
        return 0;
    if (avail < n || p[1] < lo || p[1] > hi) return 0;
    for (std::size_t i = 2; i < n; ++i)
        if (p[i] < 0x80 || p[i] > 0xBF) return 0;
    return n;
}

/// GBK double-byte code -> UTF-8, built once through iconv. Empty = unmapped.
class GbkTable {
public:
    static const GbkTable& get() {
        static const GbkTable table;
        return table;
    }
    const std::string* lookup(std::uint8_t lead, std::uint8_t trail) const {
        if (lead < 0x81 || lead > 0xFE || trail < 0x40 || trail > 0xFE || trail == 0x7F) return nullptr;
        const auto& s = map_[(lead - 0x81) * 191 + (trail - 0x40)];
        return s.empty() ? nullptr : &s;
    }

private:
    GbkTable() : map_(126 * 191) {
        iconv_t cd = iconv_open("UTF-8", "GBK");
        if (cd == reinterpret_cast<iconv_t>(-1)) throw Error("iconv has no GBK converter");
        for (int lead = 0x81; lead <= 0xFE; ++lead)
            for (int trail = 0x40; trail <= 0xFE; ++trail) {
                if (trail == 0x7F) continue;
                char in[2] = {static_cast<char>(lead), static_cast<char>(trail)};
                char out[8];
                char* ip = in;
                char* op = out;
                std::size_t il = 2, ol = sizeof out;
                iconv(cd, nullptr, nullptr, nullptr, nullptr);
                if (iconv(cd, &ip, &il, &op, &ol) != static_cast<std::size_t>(-1) && il == 0)
                    map_[(lead - 0x81) * 191 + (trail - 0x40)].assign(out, op);
            }
        iconv_close(cd);
    }
    std::vector<std::string> map_;
};

int hex_value(std::uint8_t c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

/// Decoded text plus, per decoded byte, the raw span it came from.
struct Decoded {
    std::string text;
    std::vector<std::uint32_t> start, end;

    void push(std::string_view s, std::size_t raw_start, std::size_t raw_end) {
        text.append(s);
        start.insert(start.end(), s.size(), static_cast<std::uint32_t>(raw_start));
        end.insert(end.end(), s.size(), static_cast<std::uint32_t>(raw_end));
    }
};

/// Well-formed UTF-8 copied through; each malformed byte becomes `bad`.
Decoded sanitize_utf8(ByteView raw, std::string_view bad, const Decoded* via = nullptr) {
    Decoded d;
    for (std::size_t i = 0; i < raw.size();) {
        const std::size_t n = utf8_sequence(raw.data() + i, raw.size() - i);
        const std::size_t step = n ? n : 1;
        const std::size_t s = via ? via->start[i] : i;
        const std::size_t e = via ? via->end[i + step - 1] : i + step;
        d.push(n ? as_chars(raw.subspan(i, n)) : bad, s, e);
        i += step;
    }
    return d;
}

Decoded decode_gbk(ByteView raw, std::string_view bad) {
    const auto& table = GbkTable::get();
    Decoded d;
    for (std::size_t i = 0; i < raw.size();) {
        const std::uint8_t b = raw[i];
        if (b < 0x80) {
            d.push(std::string_view(reinterpret_cast<const char*>(&raw[i]), 1), i, i + 1);
            ++i;
        } else if (const std::string* s = i + 1 < raw.size() ? table.lookup(b, raw[i + 1]) : nullptr) {
            d.push(*s, i, i + 2);
            i += 2;
        } else {
            d.push(bad, i, i + 1);
            ++i;
        }
    }
    return d;
}

Decoded percent_decode(ByteView raw) {
    Decoded d;
    for (std::size_t i = 0; i < raw.size();) {
        if (raw[i] == '%' && i + 2 < raw.size() && hex_value(raw[i + 1]) >= 0 &&
            hex_value(raw[i + 2]) >= 0) {
            const char c = static_cast<char>(hex_value(raw[i + 1]) * 16 + hex_value(raw[i + 2]));
            d.push(std::string_view(&c, 1), i, i + 3);
            i += 3;
        } else {
            d.push(std::string_view(reinterpret_cast<const char*>(&raw[i]), 1), i, i + 1);
            ++i;
        }
    }
    return d;
}

Decoded decode_url(ByteView raw, std::string_view bad) {
    const Decoded pct = percent_decode(raw);
    const ByteView bytes(reinterpret_cast<const std::uint8_t*>(pct.text.data()), pct.text.size());
    return sanitize_utf8(bytes, bad, &pct);
}

bool has_percent_escape(ByteView raw) {
    for (std::size_t i = 0; i + 2 < raw.size(); ++i)
        if (raw[i] == '%' && hex_value(raw[i + 1]) >= 0 && hex_value(raw[i + 2]) >= 0) return true;
    return false;
}

bool is_ascii(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](char c) { return static_cast<unsigned char>(c) < 0x80; });
}

struct Match {
    std::size_t begin, end; // decoded byte range
    std::string_view label;
};

void find_matches(const std::string& text, const PiiCatalog& catalog, std::vector<Match>& out) {
    const std::string lowered = ascii_lower(text);
    for (const auto& lit : catalog.literals()) {
        // Latin literals ignore case; anything with CJK (non-ASCII) is exact.
        const bool fold = is_ascii(lit.value);
        const std::string needle = fold ? ascii_lower(lit.value) : lit.value;
        const std::string& hay = fold ? lowered : text;
        for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1))
            out.push_back({pos, pos + needle.size(), lit.label});
    }
    for (std::size_t i = 0; i < catalog.patterns().size(); ++i) {
        const auto& re = catalog.compiled()[i];
        for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
            const auto& m = *it;
            if (m.length() == 0) continue;
            const auto b = static_cast<std::size_t>(m.position());
            out.push_back({b, b + static_cast<std::size_t>(m.length()), catalog.patterns()[i].label});
        }
    }
}

void collect(const Decoded& d, Encoding enc, const PiiCatalog& catalog, bool reveal, std::vector<PiiHit>& hits) {
    std::vector<Match> matches;
    find_matches(d.text, catalog, matches);
    std::sort(matches.begin(), matches.end(), [](const Match& a, const Match& b) {
        return std::tie(a.begin, a.end, a.label) < std::tie(b.begin, b.end, b.label);
    });
    for (const auto& m : matches) {
        const std::string_view text = std::string_view(d.text).substr(m.begin, m.end - m.begin);
        if (text.find('\0') != std::string_view::npos || text.find(kReplacement) != std::string_view::npos)
            continue;
        const std::size_t raw_begin = d.start[m.begin];
        const std::size_t raw_end = d.end[m.end - 1];
        // The same item seen again by a later pass (or re-anchored by a
        // neighbouring multi-byte sequence) is one hit.
        const bool dup = std::any_of(hits.begin(), hits.end(), [&](const PiiHit& h) {
            return h.label == m.label && h.offset < raw_end && raw_begin < h.offset + h.length;
        });
        if (dup) continue;
        PiiHit h;
        h.offset = raw_begin;
        h.length = raw_end - raw_begin;
        h.label = std::string(m.label);
        h.encoding = enc;
        h.excerpt = reveal ? std::string(text) : redact(text);
        hits.push_back(std::move(h));
    }
}

} // namespace

std::string_view to_string(Encoding e) {
    switch (e) {
    case Encoding::Utf8: return "UTF-8";
    case Encoding::Gbk: return "GBK";
    case Encoding::Url: return "URL-escaped";
    }
    return "?";
}

std::optional<Encoding> parse_encoding(std::string_view text) {
    for (auto e : {Encoding::Utf8, Encoding::Gbk, Encoding::Url})
        if (iequals(text, to_string(e))) return e;
    return std::nullopt;
}

PiiCatalog::PiiCatalog(std::string name, std::vector<CatalogLiteral> literals, std::vector<CatalogPattern> patterns)
    : name_(std::move(name)), literals_(std::move(literals)), patterns_(std::move(patterns)) {
    for (const auto& l : literals_) {
        if (l.value.empty()) throw ValidationError("catalog literal with label '" + l.label + "' is empty");
        if (l.label.empty()) throw ValidationError("catalog literal '" + l.value + "' has no label");
    }
    for (const auto& p : patterns_) {
        if (p.label.empty()) throw ValidationError("catalog pattern '" + p.regex + "' has no label");
        try {
            auto flags = std::regex::ECMAScript | std::regex::optimize;
            if (p.icase) flags |= std::regex::icase;
            compiled_.emplace_back(p.regex, flags);
        } catch (const std::regex_error& e) {
            throw ValidationError("catalog pattern '" + p.label + "' does not compile: " + e.what());
        }
    }
}

PiiCatalog PiiCatalog::from_json(const Json& j) {
    try {
        std::vector<CatalogLiteral> lits;
        for (const auto& l : j.value("literals", Json::array()))
            lits.push_back({l.at("value").get<std::string>(), l.at("label").get<std::string>()});
        std::vector<CatalogPattern> pats;
        for (const auto& p : j.value("patterns", Json::array()))
            pats.push_back({p.at("regex").get<std::string>(), p.at("label").get<std::string>(), p.value("icase", false)});
        return PiiCatalog(j.value("name", "unnamed"), std::move(lits), std::move(pats));
    } catch (const Json::exception& e) {
        throw ParseError(std::string("PII catalog: ") + e.what());
    }
}

PiiCatalog PiiCatalog::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open PII catalog " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::exception& e) {
        throw ParseError("PII catalog " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

std::filesystem::path PiiCatalog::default_path() { return std::filesystem::path(IOTAUDIT_DATA_DIR) / "pii" / "catalog.json"; }

Json PiiCatalog::to_json() const {
    Json lits = Json::array(), pats = Json::array();
    for (const auto& l : literals_) lits.push_back({{"value", l.value}, {"label", l.label}});
    for (const auto& p : patterns_) {
        Json pj{{"regex", p.regex}, {"label", p.label}};
        if (p.icase) pj["icase"] = true;
        pats.push_back(pj);
    }
    return Json{{"name", name_}, {"literals", lits}, {"patterns", pats}};
}

std::string redact(std::string_view utf8) {
    std::vector<std::string_view> chars;
    const auto* p = reinterpret_cast<const std::uint8_t*>(utf8.data());
    for (std::size_t i = 0; i < utf8.size();) {
        const std::size_t n = std::max<std::size_t>(1, utf8_sequence(p + i, utf8.size() - i));
        chars.push_back(utf8.substr(i, n));
        i += n;
    }
    if (chars.size() <= 1) return chars.empty() ? "" : "*";
    std::string out(chars.front());
    out.append(chars.size() - 2, '*');
    if (chars.size() == 2) return out + "*";
    out.append(chars.back());
    return out;
}

std::string decode_span(ByteView raw, Encoding e) {
    switch (e) {
    case Encoding::Utf8: return sanitize_utf8(raw, kReplacement).text;
    case Encoding::Gbk: return decode_gbk(raw, kReplacement).text;
    case Encoding::Url: return decode_url(raw, kReplacement).text;
    }
    return {};
}

std::vector<PiiHit> scan_payload(ByteView payload, const PiiCatalog& catalog, bool reveal) {
    std::vector<PiiHit> hits;
    if (payload.empty()) return hits;
    const std::string_view bad("\0", 1);
    collect(sanitize_utf8(payload, bad), Encoding::Utf8, catalog, reveal, hits);
    if (std::any_of(payload.begin(), payload.end(), [](std::uint8_t b) { return b >= 0x80; }))
        collect(decode_gbk(payload, bad), Encoding::Gbk, catalog, reveal, hits);
    if (has_percent_escape(payload)) collect(decode_url(payload, bad), Encoding::Url, catalog, reveal, hits);
    std::sort(hits.begin(), hits.end(),
              [](const PiiHit& a, const PiiHit& b) { return std::tie(a.offset, a.label) < std::tie(b.offset, b.label); });
    return hits;
}

namespace {

std::vector<PiiHit> scan_flow(const pcap::FlowRecord& flow, const enc::TrafficClassification& cls,
                              const PiiCatalog& catalog, bool reveal) {
    std::vector<PiiHit> out;
    for (int dir = 0; dir < 2; ++dir) {
        const Bytes& payload = flow.payload[dir];
        std::vector<PiiHit> hits;
        if (cls.verdict == enc::Verdict::Media) {
            if (!pcap::http::looks_like_http(payload)) continue;
            for (const auto& msg : pcap::http::parse_stream(payload)) {
                auto part = scan_payload(ByteView(payload).subspan(msg.offset, msg.header_length), catalog, reveal);
                for (auto& h : part) h.offset += msg.offset;
                hits.insert(hits.end(), part.begin(), part.end());
            }
        } else {
            hits = scan_payload(payload, catalog, reveal);
        }
        for (auto& h : hits) {
            h.flow_key = flow.key;
            h.device_id = flow.device_id;
            h.phase = flow.phase;
            h.direction = static_cast<pcap::Direction>(dir);
            out.push_back(std::move(h));
        }
    }
    return out;
}

bool scannable(enc::Verdict v) {
    return v == enc::Verdict::Text || v == enc::Verdict::Unknown || v == enc::Verdict::Media;
}

} // namespace

PiiScan scan(const std::vector<pcap::FlowRecord>& flows,
             const std::vector<const enc::TrafficClassification*>& classifications, const PiiCatalog& catalog,
             const ScanOptions& options) {
    if (classifications.size() != flows.size())
        throw PreconditionError("scan: one classification slot per flow is required");
    PiiScan result;
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < flows.size(); ++i) {
        if (classifications[i] && scannable(classifications[i]->verdict)) todo.push_back(i);
        else ++result.flows_skipped;
    }
    result.flows_scanned = todo.size();

    std::vector<std::vector<PiiHit>> per_flow(todo.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k; (k = next++) < todo.size();)
            per_flow[k] = scan_flow(flows[todo[k]], *classifications[todo[k]], catalog, options.reveal);
    };
    const std::size_t n_threads =
        std::min(todo.size(), options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency()));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& v : per_flow) result.hits.insert(result.hits.end(), v.begin(), v.end());
    return result;
}

std::string pii_hits_csv(const std::vector<PiiHit>& hits) {
    std::string out = "device_id,phase,flow_key,direction,offset,length,label,encoding,excerpt\n";
    for (const auto& h : hits)
        out += csv_row({h.device_id, h.phase ? std::string(to_string(*h.phase)) : "", h.flow_key.to_string(),
                        h.direction == pcap::Direction::Forward ? "fwd" : "rev", std::to_string(h.offset),
                        std::to_string(h.length), h.label, std::string(to_string(h.encoding)), h.excerpt}) +
               "\n";
    return out;
}

} // namespace iotaudit::pii
