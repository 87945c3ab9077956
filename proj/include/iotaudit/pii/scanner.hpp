#pragma once

#include "iotaudit/core/json.hpp"
#include "iotaudit/core/phase.hpp"
#include "iotaudit/enc/classifier.hpp"
#include "iotaudit/pcap/flow.hpp"

#include <filesystem>
#include <optional>
#include <regex>
#include <string>
#include <vector>

namespace iotaudit::pii {

enum class Encoding { Utf8, Gbk, Url };
std::string_view to_string(Encoding e); // "UTF-8", "GBK", "URL-escaped"
std::optional<Encoding> parse_encoding(std::string_view text);

struct CatalogLiteral {
    std::string value; // UTF-8
    std::string label;
};

/// ECMAScript syntax, matched against decoded UTF-8 text.
struct CatalogPattern {
    std::string regex;
    std::string label;
    bool icase = false;
};

class PiiCatalog {
public:
    /// Throws ValidationError on empty literals or regexes that do not compile.
    PiiCatalog(std::string name, std::vector<CatalogLiteral> literals, std::vector<CatalogPattern> patterns);

    static PiiCatalog from_json(const Json& j);
    static PiiCatalog load(const std::filesystem::path& path);
    /// data/pii/catalog.json
    static std::filesystem::path default_path();

    const std::string& name() const { return name_; }
    const std::vector<CatalogLiteral>& literals() const { return literals_; }
    const std::vector<CatalogPattern>& patterns() const { return patterns_; }
    const std::vector<std::regex>& compiled() const { return compiled_; }
    Json to_json() const;

private:
    std::string name_;
    std::vector<CatalogLiteral> literals_;
    std::vector<CatalogPattern> patterns_;
    std::vector<std::regex> compiled_;
};

/// A match in one direction of a flow. `offset`/`length` address the raw
/// payload bytes; decoding them under `encoding` gives the matched text.
struct PiiHit {
    pcap::FlowKey flow_key;
    std::string device_id;
    std::optional<PhaseLabel> phase;
    pcap::Direction direction = pcap::Direction::Forward;
    std::size_t offset = 0;
    std::size_t length = 0;
    std::string label;
    std::string excerpt;
    Encoding encoding = Encoding::Utf8;
};

/// Keeps the first and last character (UTF-8 code points), stars the rest.
/// One-character input becomes "*".
std::string redact(std::string_view utf8);

/// Decodes a raw span the way the scanner's pass for `e` does. Undecodable
/// bytes come out as U+FFFD.
std::string decode_span(ByteView raw, Encoding e);

struct ScanOptions {
    bool reveal = false; // unredacted excerpts
    std::size_t threads = 0; // 0 = hardware concurrency
};

/// Hits in one payload, sorted by offset then label. The flow fields are left
/// empty.
std::vector<PiiHit> scan_payload(ByteView payload, const PiiCatalog& catalog, bool reveal = false);

struct PiiScan {
    std::vector<PiiHit> hits;
    std::size_t flows_scanned = 0;
    std::size_t flows_skipped = 0; // encrypted, compressed, media without HTTP, no payload
};

/// `classifications[i]` belongs to `flows[i]` (null = not classified, skipped).
/// TEXT and UNKNOWN flows are scanned whole; MEDIA flows only over their HTTP
/// header region.
PiiScan scan(const std::vector<pcap::FlowRecord>& flows,
             const std::vector<const enc::TrafficClassification*>& classifications, const PiiCatalog& catalog,
             const ScanOptions& options = {});

/// Columns: device_id,phase,flow_key,direction,offset,length,label,encoding,excerpt
std::string pii_hits_csv(const std::vector<PiiHit>& hits);

} // namespace iotaudit::pii
