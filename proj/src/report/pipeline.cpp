#include "iotaudit/report/pipeline.hpp"

#include "iotaudit/core/error.hpp"
#include "iotaudit/core/strings.hpp"
#include "iotaudit/dest/analysis.hpp"
#include "iotaudit/enc/heatmap.hpp"
#include "iotaudit/pcap/dns_map.hpp"
#include "iotaudit/pcap/packet.hpp"
#include "iotaudit/pii/scanner.hpp"
#include "iotaudit/tls/certificates.hpp"
#include "iotaudit/tls/protocols.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <thread>

namespace iotaudit::report {

namespace {

std::filesystem::path data_file(const std::filesystem::path& configured, const char* fallback) {
    return configured.empty() ? std::filesystem::path(IOTAUDIT_DATA_DIR) / fallback : configured;
}

std::filesystem::path resolve(const Json& j, const char* key, const std::filesystem::path& base) {
    if (!j.contains(key)) return {};
    std::filesystem::path p = j.at(key).get<std::string>();
    return p.is_absolute() ? p : base / p;
}

struct CaptureWork {
    const CaptureEntry* entry = nullptr;
    bool ok = false;
    std::string error;
    std::size_t packets = 0, malformed = 0, non_ip = 0;
    std::vector<std::string> warnings;
    std::vector<pcap::FlowRecord> flows;
    std::vector<std::optional<enc::TrafficClassification>> classes;
    pcap::DnsMap dns;
};

void ingest(CaptureWork& w, const CorpusManifest& manifest, const AnalysisConfig& config) {
    try {
        auto parsed = pcap::parse_capture(w.entry->resolved, w.entry->device_id);
        w.packets = parsed.packets.size();
        w.malformed = parsed.malformed_skipped;
        w.non_ip = parsed.non_ip_skipped;
        w.warnings = std::move(parsed.warnings);
        pcap::AssemblyOptions opts;
        opts.device = manifest.device(w.entry->device_id);
        w.flows = pcap::assemble_flows(std::move(parsed.packets), w.entry->device_id, opts);
        for (auto& f : w.flows) f.phase = w.entry->phase;
        w.dns = pcap::build_dns_map(w.flows).map;
        for (const auto& f : w.flows) w.classes.push_back(enc::classify_flow(f, enc::MagicTable::builtin(), config.thresholds));
        // Later stages read reassembled payloads only.
        for (auto& f : w.flows) {
            f.packets.clear();
            f.packets.shrink_to_fit();
            f.packet_directions.clear();
        }
        w.ok = true;
    } catch (const std::exception& e) {
        w.error = e.what();
        w.flows.clear();
        w.classes.clear();
    }
}

std::string csv_with_metadata(const Json& metadata, const std::string& csv) { return "# " + metadata.dump() + "\n" + csv; }

std::string json_with_metadata(const Json& metadata, const char* key, Json body) {
    Json j{{"metadata", metadata}, {key, std::move(body)}};
    return j.dump(2) + "\n";
}

std::string opt_phase(const std::optional<PhaseLabel>& p) { return p ? std::string(to_string(*p)) : ""; }

} // namespace

AnalysisConfig AnalysisConfig::from_json(const Json& j, const std::filesystem::path& base_dir) {
    AnalysisConfig c;
    try {
        c.geo_db = resolve(j, "geo_db", base_dir);
        c.org_aliases = resolve(j, "org_aliases", base_dir);
        c.party_policy = resolve(j, "party_policy", base_dir);
        c.pii_catalog = resolve(j, "pii_catalog", base_dir);
        c.audit_policy = resolve(j, "audit_policy", base_dir);
        c.geo_cache = resolve(j, "geo_cache", base_dir);
        c.geo_online_endpoint = j.value("geo_online_endpoint", "");
        if (j.contains("thresholds")) {
            const auto& t = j.at("thresholds");
            c.thresholds.ssl = t.value("ssl", c.thresholds.ssl);
            c.thresholds.encrypted = t.value("encrypted", c.thresholds.encrypted);
            c.thresholds.text = t.value("text", c.thresholds.text);
        }
        if (j.contains("byte_unit")) {
            auto u = pcap::parse_byte_unit(j.at("byte_unit").get<std::string>());
            if (!u) throw ValidationError("config: byte_unit must be wire or payload");
            c.byte_unit = *u;
        }
        if (j.contains("firmware")) {
            c.firmware = parse_firmware_tag(j.at("firmware").get<std::string>());
            if (!c.firmware) throw ValidationError("config: firmware must be pre, post or none");
        }
        c.threads = j.value("threads", std::size_t{0});
        c.reveal_pii = j.value("reveal_pii", false);
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    return c;
}

AnalysisConfig AnalysisConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path.string());
    try {
        return from_json(Json::parse(in), path.parent_path());
    } catch (const Json::exception& e) {
        throw ValidationError("config " + path.string() + ": " + e.what());
    }
}

void ReportBundle::write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (const auto& [name, content] : files) {
        std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + (dir / name).string());
        out << content;
    }
}

Json load_bundle_summary(const std::filesystem::path& dir) {
    std::ifstream in(dir / "bundle.json");
    if (!in) throw ValidationError("no bundle.json in " + dir.string());
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw ValidationError((dir / "bundle.json").string() + ": " + e.what());
    }
}

ReportBundle run_pipeline(const CorpusManifest& manifest, const AnalysisConfig& config) {
    std::vector<const CaptureEntry*> selected;
    std::set<FirmwareTag> tags;
    for (const auto& c : manifest.captures) {
        if (config.firmware && c.firmware != *config.firmware) continue;
        selected.push_back(&c);
        tags.insert(c.firmware);
    }
    if (tags.contains(FirmwareTag::Pre) && tags.contains(FirmwareTag::Post))
        throw ValidationError("manifest mixes pre- and post-update captures; pick one with --firmware");
    if (selected.empty()) throw ValidationError("manifest selects no captures");

    // Inputs that every stage shares; any problem here is a configuration error.
    dest::GeoProvider geo(std::make_shared<dest::OfflineGeoDb>(dest::OfflineGeoDb::load(data_file(config.geo_db, "geo/snapshot.csv"))),
                          dest::OrgAliases::load(data_file(config.org_aliases, "geo/org_aliases.json")));
    if (!config.geo_online_endpoint.empty())
        geo.set_online(std::make_unique<dest::HttpGeoSource>(config.geo_online_endpoint),
                       config.geo_cache.empty() ? std::nullopt : std::optional(config.geo_cache));
    const auto policy = config.party_policy.empty() ? dest::PartyPolicyMap{} : dest::PartyPolicyMap::load(config.party_policy);
    const auto catalog = pii::PiiCatalog::load(data_file(config.pii_catalog, "pii/catalog.json"));
    const auto audit_policy = tls::AuditPolicy::load(data_file(config.audit_policy, "audit/policy.json"));
    const auto trust = tls::TrustStore::load(audit_policy.trust_bundle.empty() ? tls::TrustStore::default_bundle()
                                                                               : audit_policy.trust_bundle);

    // Ingest, corpus-parallel.
    std::vector<CaptureWork> work(selected.size());
    for (std::size_t i = 0; i < selected.size(); ++i) work[i].entry = selected[i];
    {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t k; (k = next++) < work.size();) ingest(work[k], manifest, config);
        };
        const std::size_t n = std::min(work.size(), config.threads ? config.threads
                                                                   : std::max(1u, std::thread::hardware_concurrency()));
        std::vector<std::thread> pool;
        for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
        worker();
        for (auto& t : pool) t.join();
    }

    ReportBundle bundle;
    Json meta;
    meta["tool"] = "iotaudit";
    meta["version"] = IOTAUDIT_VERSION;
    meta["geo_snapshot"] = geo.snapshot();
    meta["geo_online"] = !config.geo_online_endpoint.empty();
    meta["thresholds"] = config.thresholds.to_json();
    meta["byte_unit"] = std::string(pcap::to_string(config.byte_unit));
    meta["magic_table"] = enc::MagicTable::builtin().version();
    meta["pii_catalog"] = catalog.name();
    auto policy_json = audit_policy.to_json();
    policy_json["trust_bundle"] = audit_policy.trust_bundle.filename().string();
    meta["audit_policy"] = policy_json;
    meta["trust_anchors"] = trust.size();
    meta["party_policy_entries"] = policy.entries().size();
    meta["firmware"] = config.firmware ? std::string(to_string(*config.firmware)) : std::string("all");
    meta["pii_values"] = config.reveal_pii ? "revealed" : "redacted";
    bundle.metadata = meta;

    // Flatten usable captures in manifest order.
    std::vector<pcap::FlowRecord> flows;
    std::vector<enc::TrafficClassification> classes;
    std::vector<std::ptrdiff_t> class_of; // flow index -> classes index or -1
    pcap::DnsMap dns;
    std::string ingest_csv = "device_id,phase,firmware_tag,path,status,packets,flows,malformed_skipped,non_ip_skipped,error\n";
    Json errors = Json::array();
    std::size_t used = 0;
    for (auto& w : work) {
        const auto& e = *w.entry;
        ingest_csv += csv_row({e.device_id, e.phase ? std::string(to_string(*e.phase)) : "FULL",
                               std::string(to_string(e.firmware)), e.path, w.ok ? "ok" : "quarantined",
                               std::to_string(w.packets), std::to_string(w.flows.size()), std::to_string(w.malformed),
                               std::to_string(w.non_ip), w.error}) +
                      "\n";
        if (!w.ok) {
            bundle.quarantined.push_back({e, w.error});
            errors.push_back({{"device_id", e.device_id},
                              {"phase", e.phase ? std::string(to_string(*e.phase)) : "FULL"},
                              {"path", e.path},
                              {"error", w.error}});
            continue;
        }
        ++used;
        dns.merge(w.dns);
        for (std::size_t i = 0; i < w.flows.size(); ++i) {
            if (w.classes[i]) {
                class_of.push_back(static_cast<std::ptrdiff_t>(classes.size()));
                classes.push_back(std::move(*w.classes[i]));
            } else {
                class_of.push_back(-1);
            }
            flows.push_back(std::move(w.flows[i]));
        }
        w.flows.clear();
    }
    bundle.files["ingest.csv"] = csv_with_metadata(meta, ingest_csv);
    bundle.files["errors.json"] = json_with_metadata(meta, "quarantined", errors);
    if (used == 0) throw ValidationError("no usable captures: all " + std::to_string(work.size()) + " were quarantined");

    std::vector<const enc::TrafficClassification*> class_ptrs;
    for (auto idx : class_of) class_ptrs.push_back(idx < 0 ? nullptr : &classes[static_cast<std::size_t>(idx)]);

    // Destinations.
    std::map<std::string, std::string> category_of;
    std::vector<dest::DeviceTraffic> corpus;
    for (const auto& d : manifest.devices) {
        category_of[d.device_id] = d.category;
        dest::DeviceTraffic dt{d, {}};
        for (const auto& f : flows) {
            if (f.device_id != d.device_id) continue;
            pcap::FlowRecord light = f;
            light.payload[0].clear();
            light.payload[1].clear();
            dt.flows.push_back(std::move(light));
        }
        if (!dt.flows.empty()) corpus.push_back(std::move(dt));
    }
    const auto records = dest::resolve_destinations(corpus, dns, geo, policy);
    geo.save_cache();
    const auto index = dest::index_destinations(records);
    const auto proportions = dest::proportion_table(corpus, index, config.byte_unit);
    Json by_phase;
    for (auto p : kAllPhases)
        by_phase[std::string(to_string(p))] = dest::proportion_table(corpus, index, config.byte_unit, p).to_json();
    const auto parties = dest::server_party_counts(corpus, index, dest::table2_column);
    const auto ranking = dest::organization_ranking(records);

    bundle.files["destinations.csv"] = csv_with_metadata(meta, dest::destinations_csv(records));
    bundle.files["proportions.json"] = json_with_metadata(
        meta, "proportions", Json{{"FULL", proportions.to_json()}, {"by_phase", by_phase}, {"sankey", proportions.sankey()}});
    bundle.files["party_counts.csv"] = csv_with_metadata(meta, parties.to_csv());
    bundle.files["org_ranking.csv"] = csv_with_metadata(meta, dest::org_ranking_csv(ranking));

    // Encryption.
    const auto heatmap = enc::encryption_heatmap(classes, category_of, config.byte_unit);
    bundle.files["encryption.csv"] = csv_with_metadata(meta, enc::encryption_csv(classes));
    bundle.files["heatmap.json"] = json_with_metadata(meta, "heatmap", heatmap.to_json());
    struct Shares {
        std::uint64_t enc = 0, unenc = 0, unknown = 0;
    };
    std::map<std::string, Shares> shares;
    for (const auto& c : classes) {
        auto& s = shares[c.device_id];
        const auto b = c.bytes(config.byte_unit);
        if (c.verdict == enc::Verdict::Encrypted) s.enc += b;
        else if (enc::is_unencrypted(c.verdict)) s.unenc += b;
        else s.unknown += b;
    }
    std::string shares_csv = "device_id,encrypted_pct,unencrypted_pct,unknown_pct\n";
    for (const auto& [dev, s] : shares) {
        const double total = static_cast<double>(s.enc + s.unenc + s.unknown);
        if (total == 0) continue;
        shares_csv += csv_row({dev, format_fixed(100.0 * s.enc / total, 4), format_fixed(100.0 * s.unenc / total, 4),
                               format_fixed(100.0 * s.unknown / total, 4)}) +
                      "\n";
    }
    bundle.files["encryption_shares.csv"] = csv_with_metadata(meta, shares_csv);

    // TLS.
    const auto inventory = tls::detect_protocol_versions(flows, class_ptrs);
    Json undetermined = Json::array();
    for (const auto& u : inventory.undetermined)
        undetermined.push_back({{"device_id", u.device_id}, {"phase", opt_phase(u.phase)}, {"flow", u.flow}, {"reason", u.reason}});
    bundle.files["protocols.csv"] = csv_with_metadata(meta, inventory.to_csv());
    bundle.files["protocol_table.json"] =
        json_with_metadata(meta, "protocols", Json{{"table", inventory.table()}, {"undetermined", undetermined}});

    const auto extraction = tls::extract_certificates(flows);
    const auto findings = tls::audit_certificates(extraction.records, audit_policy, trust);
    auto column_of = [&](const std::string& dev) {
        const auto* d = manifest.device(dev);
        return d ? dest::table2_column(*d) : std::string("other devices");
    };
    const auto finding_table = tls::finding_table(findings, column_of);
    Json cert_warnings = Json::array();
    for (const auto& w : extraction.warnings)
        cert_warnings.push_back({{"device_id", w.device_id}, {"endpoint", w.endpoint}, {"message", w.message}});
    Json models{{"certificate_devices", extraction.certificate_model_devices},
                {"psk_devices", extraction.psk_model_devices},
                {"cert_opaque_sessions", extraction.cert_opaque_sessions},
                {"warnings", cert_warnings}};
    bundle.files["certificates.jsonl"] = Json{{"metadata", meta}}.dump() + "\n" + extraction.to_jsonl();
    bundle.files["cert_findings.csv"] = csv_with_metadata(meta, tls::findings_csv(findings));
    bundle.files["cert_models.json"] = json_with_metadata(meta, "models", models);

    // PII.
    pii::ScanOptions scan_opts;
    scan_opts.threads = config.threads;
    scan_opts.reveal = config.reveal_pii;
    const auto pii_scan = pii::scan(flows, class_ptrs, catalog, scan_opts);
    bundle.files["pii_hits.csv"] = csv_with_metadata(meta, pii::pii_hits_csv(pii_scan.hits));

    // The probe is a separate command; the bundle carries an empty table.
    bundle.files["mitm_verdicts.csv"] = csv_with_metadata(meta, "verdict,device_count,server_count\n");

    // Summary.
    Json devices = Json::object();
    for (const auto& d : manifest.devices) {
        Json dj{{"category", d.category}, {"brand", d.brand}};
        std::set<std::string> protos;
        if (auto it = inventory.usage.find(d.device_id); it != inventory.usage.end())
            if (auto full = it->second.find(std::string(tls::kFullLifecycle)); full != it->second.end())
                for (auto v : full->second) protos.insert(std::string(tls::to_string(v)));
        dj["protocols"] = protos;
        if (auto it = shares.find(d.device_id); it != shares.end()) {
            const double total = static_cast<double>(it->second.enc + it->second.unenc + it->second.unknown);
            if (total > 0)
                dj["shares"] = {{"encrypted", 100.0 * it->second.enc / total},
                                {"unencrypted", 100.0 * it->second.unenc / total},
                                {"unknown", 100.0 * it->second.unknown / total}};
        }
        std::set<std::string> dests;
        for (const auto& r : records) {
            if (r.device_id != d.device_id) continue;
            if (r.domains.empty()) dests.insert(r.ip.to_string());
            else dests.insert(r.domains.begin(), r.domains.end());
        }
        dj["destinations"] = dests;
        devices[d.device_id] = dj;
    }
    Json org_json = Json::array();
    for (const auto& o : ranking) org_json.push_back({{"organization", o.organization}, {"devices", o.devices}});
    std::map<std::string, std::size_t> pii_labels;
    for (const auto& h : pii_scan.hits) ++pii_labels[h.label];

    Json summary;
    summary["metadata"] = meta;
    summary["captures"] = {{"selected", work.size()}, {"used", used}, {"quarantined", bundle.quarantined.size()}};
    summary["devices"] = devices;
    summary["tables"] = {
        {"proportions", proportions.to_json()},
        {"org_ranking", org_json},
        {"party_counts", parties.to_json()},
        {"heatmap", heatmap.to_json()},
        {"protocols", inventory.table()},
        {"undetermined_tls_flows", inventory.undetermined.size()},
        {"cert_models", {{"certificate", extraction.certificate_model_devices.size()},
                         {"psk", extraction.psk_model_devices.size()},
                         {"cert_opaque_sessions", extraction.cert_opaque_sessions}}},
        {"cert_findings", finding_table},
        {"pii", {{"flows_scanned", pii_scan.flows_scanned}, {"hits_by_label", pii_labels}}},
        {"geo_coverage", geo.coverage().to_json()},
    };
    Json names = Json::array();
    for (const auto& [name, _] : bundle.files) names.push_back(name);
    names.push_back("bundle.json");
    summary["files"] = names;
    bundle.summary = summary;
    bundle.files["bundle.json"] = summary.dump(2) + "\n";
    return bundle;
}

} // namespace iotaudit::report
