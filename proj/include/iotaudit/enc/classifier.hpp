#pragma once

#include "iotaudit/core/json.hpp"
#include "iotaudit/core/phase.hpp"
#include "iotaudit/enc/magic.hpp"
#include "iotaudit/pcap/flow.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace iotaudit::enc {

enum class Verdict { Encrypted, Text, Media, Compressed, Unknown };
enum class Rule { HttpContentType, SslEntropy, Dnskey, MagicNumber, EntropyThreshold };

std::string_view to_string(Verdict v);
std::string_view to_string(Rule r);
std::optional<Verdict> parse_verdict(std::string_view text);

/// TEXT, MEDIA and COMPRESSED all count as unencrypted.
inline bool is_unencrypted(Verdict v) { return v == Verdict::Text || v == Verdict::Media || v == Verdict::Compressed; }

struct Thresholds {
    double ssl = 0.8;       // application-record entropy for TLS flows
    double encrypted = 0.9; // final stage, above
    double text = 0.4;      // final stage, below
    std::size_t window = 16 * 1024;  // sample bytes per direction
    std::size_t min_payload = 64;    // shorter samples reaching the final stage are UNKNOWN

    Json to_json() const;
};

struct TrafficClassification {
    pcap::FlowKey key;
    std::string device_id;
    std::optional<PhaseLabel> phase;
    Verdict verdict = Verdict::Unknown;
    Rule rule = Rule::EntropyThreshold;
    std::optional<double> entropy;
    std::string detail; // content type, magic format, ...
    std::uint64_t wire_bytes = 0;
    std::uint64_t payload_bytes = 0;
    bool tls_record_layer = false;

    std::uint64_t bytes(pcap::ByteUnit unit) const {
        return unit == pcap::ByteUnit::Wire ? wire_bytes : payload_bytes;
    }
};

/// Verdict family for an HTTP Content-Type (and Content-Encoding). nullopt
/// when the type says nothing about the body (e.g. application/octet-stream).
std::optional<Verdict> content_type_family(std::string_view content_type, std::string_view content_encoding = {});

/// Runs the cascade. nullopt for flows with no application payload.
std::optional<TrafficClassification> classify_flow(const pcap::FlowRecord& flow,
                                                   const MagicTable& magic = MagicTable::builtin(),
                                                   const Thresholds& th = {});

struct ClassificationRun {
    std::vector<TrafficClassification> flows;
    std::size_t zero_payload_excluded = 0;
};

ClassificationRun classify_flows(const std::vector<pcap::FlowRecord>& flows,
                                 const MagicTable& magic = MagicTable::builtin(), const Thresholds& th = {});

std::string encryption_csv(const std::vector<TrafficClassification>& rows);

} // namespace iotaudit::enc
