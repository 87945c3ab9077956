#pragma once

#include "iotaudit/core/json.hpp"
#include "iotaudit/enc/classifier.hpp"
#include "iotaudit/report/manifest.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace iotaudit::report {

struct AnalysisConfig {
    std::filesystem::path geo_db;       // empty = data/geo/snapshot.csv
    std::filesystem::path org_aliases;  // empty = data/geo/org_aliases.json
    std::filesystem::path party_policy; // empty = no SUPPORT mappings
    std::filesystem::path pii_catalog;  // empty = data/pii/catalog.json
    std::filesystem::path audit_policy; // empty = data/audit/policy.json
    /// Online geolocation for addresses the snapshot misses; off when empty.
    std::string geo_online_endpoint;
    std::filesystem::path geo_cache;
    enc::Thresholds thresholds;
    pcap::ByteUnit byte_unit = pcap::ByteUnit::Wire;
    /// Restrict the run to one firmware tag. Required when the manifest mixes pre and post.
    std::optional<FirmwareTag> firmware;
    std::size_t threads = 0;
    /// Write matched PII in full instead of redacted excerpts.
    bool reveal_pii = false;

    /// Keys mirror the fields; relative paths resolve against `base_dir`.
    static AnalysisConfig from_json(const Json& j, const std::filesystem::path& base_dir);
    static AnalysisConfig load(const std::filesystem::path& path);
};

struct QuarantinedCapture {
    CaptureEntry capture;
    std::string error;
};

/// Every artifact of one run, rendered. Files are keyed by name; CSV files
/// carry the run metadata on a leading `#` line, JSON files under "metadata".
struct ReportBundle {
    Json metadata;
    Json summary; // bundle.json
    std::map<std::string, std::string> files;
    std::vector<QuarantinedCapture> quarantined;

    bool partial() const { return !quarantined.empty(); }
    /// Writes every file into `dir` (created if needed).
    void write(const std::filesystem::path& dir) const;
};

/// ingest -> destinations -> encryption -> TLS audit -> PII. A capture that
/// fails to parse is quarantined; zero usable captures throws ValidationError.
ReportBundle run_pipeline(const CorpusManifest& manifest, const AnalysisConfig& config);

/// Reads bundle.json back from a bundle directory.
Json load_bundle_summary(const std::filesystem::path& dir);

} // namespace iotaudit::report
