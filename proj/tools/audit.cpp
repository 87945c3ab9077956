// audit: command-line front end for capture, analysis and probing.

#include "iotaudit/capture/process_file.hpp"
#include "iotaudit/capture/segment.hpp"
#include "iotaudit/capture/session.hpp"
#include "iotaudit/capture/timestamps.hpp"
#include "iotaudit/core/error.hpp"
#include "iotaudit/core/strings.hpp"
#include "iotaudit/mitm/ca.hpp"
#include "iotaudit/mitm/classify.hpp"
#include "iotaudit/mitm/decrypt.hpp"
#include "iotaudit/mitm/fleet.hpp"
#include "iotaudit/mitm/probe.hpp"
#include "iotaudit/mitm/session.hpp"
#include "iotaudit/report/diff.hpp"
#include "iotaudit/report/pipeline.hpp"
#include "iotaudit/report/render.hpp"
#include "iotaudit/tls/certificates.hpp"
#include "iotaudit/tls/x509.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

using namespace iotaudit;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kPartial = 2;

struct Globals {
    std::string config;
    std::string geo_db;
    std::optional<double> th_ssl, th_enc, th_text;
    std::string byte_unit;
    std::string firmware;
    bool reveal_values = false;
    std::size_t threads = 0;
};

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

report::AnalysisConfig analysis_config(const Globals& g) {
    auto c = g.config.empty() ? report::AnalysisConfig{} : report::AnalysisConfig::load(g.config);
    if (!g.geo_db.empty()) c.geo_db = g.geo_db;
    if (g.th_ssl) c.thresholds.ssl = *g.th_ssl;
    if (g.th_enc) c.thresholds.encrypted = *g.th_enc;
    if (g.th_text) c.thresholds.text = *g.th_text;
    if (!g.byte_unit.empty()) {
        auto u = pcap::parse_byte_unit(g.byte_unit);
        if (!u) throw ValidationError("--byte-unit must be wire or payload");
        c.byte_unit = *u;
    }
    if (!g.firmware.empty()) {
        c.firmware = report::parse_firmware_tag(g.firmware);
        if (!c.firmware) throw ValidationError("--firmware must be pre, post or none");
    }
    if (g.reveal_values) c.reveal_pii = true;
    if (g.threads) c.threads = g.threads;
    return c;
}

// ---- capture

struct CaptureArgs {
    std::string process, iface, out, device, script, command;
    bool no_iface_check = false;
};

int cmd_capture(const CaptureArgs& a) {
    const auto process = capture::load_process(a.process);
    capture::SessionOptions opts;
    opts.device_id = a.device;
    opts.iface = a.iface;
    opts.out_dir = a.out;
    opts.check_interface = !a.no_iface_check;
    opts.log = &std::cerr;

    capture::SystemClock clock;
    std::unique_ptr<capture::Operator> op;
    if (a.script.empty())
        op = std::make_unique<capture::TerminalOperator>(std::cin, std::cout);
    else
        op = std::make_unique<capture::ScriptedOperator>(capture::ScriptedOperator::from_file(a.script, clock));
    capture::SubprocessCapture proc(a.command.empty() ? capture::SubprocessCapture::default_command()
                                                      : split(a.command, ' '));

    const auto r = capture::run_capture_session(process, opts, *op, clock, proc);
    std::cout << "capture:    " << r.raw_capture.string() << "\n"
              << "timestamps: " << r.timestamps_path.string() << "\n"
              << "operations: " << r.timestamps.entries.size() << " of " << process.operations.size() << "\n";
    if (r.aborted) {
        std::cerr << "session aborted; timestamp file marked incomplete\n";
        return kPartial;
    }
    return kOk;
}

// ---- segment

struct SegmentArgs {
    std::string pcap, timestamps, out;
    std::int64_t clock_offset_ms = 0;
    bool merge_phases = false;
};

int cmd_segment(const SegmentArgs& a) {
    const auto ts = capture::read_timestamps(a.timestamps);
    capture::SegmentOptions opts;
    opts.out_dir = a.out;
    opts.clock_offset_ms = a.clock_offset_ms;
    opts.merge_phases = a.merge_phases;
    const auto r = capture::segment_capture(a.pcap, ts, opts);
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << r.to_json().dump(2) << "\n";
    if (!ts.complete) {
        std::cerr << "timestamp file is incomplete; later operations are in the residue\n";
        return kPartial;
    }
    return kOk;
}

// ---- analyze

int cmd_analyze(const Globals& g, const std::string& manifest_path, const std::string& out) {
    const auto manifest = report::CorpusManifest::load(manifest_path);
    const auto bundle = report::run_pipeline(manifest, analysis_config(g));
    bundle.write(out);
    const auto& caps = bundle.summary.at("captures");
    std::cout << "captures used " << caps.at("used") << " of " << caps.at("selected") << "; bundle written to " << out
              << "\n";
    if (bundle.partial()) {
        for (const auto& q : bundle.quarantined)
            std::cerr << "quarantined " << q.capture.path << ": " << q.error << "\n";
        return kPartial;
    }
    return kOk;
}

// ---- probe

struct ProbeArgs {
    std::string rules, state, out, fleet, listen = "0.0.0.0";
    double duration = 300;
    std::uint16_t port = 8443;
};

std::string observations_csv(const std::vector<mitm::MitmObservation>& obs) {
    std::string out = "device_id,endpoint,verdict,sessions,evidence\n";
    for (const auto& o : obs)
        out += csv_row({o.device_id, o.endpoint, std::string(to_string(o.verdict)), std::to_string(o.sessions),
                        o.evidence}) +
               "\n";
    return out;
}

void write_probe_outputs(const fs::path& dir, const Json& meta, const mitm::ProbeResult& result,
                         const std::vector<mitm::MitmObservation>& obs, bool reveal) {
    const std::string head = "# " + meta.dump() + "\n";
    write_text(dir / "mitm_sessions.jsonl", head + mitm::sessions_jsonl(result.sessions, reveal));
    write_text(dir / "mitm_verdicts.csv", head + mitm::VerdictTable::from(obs).to_csv());
    write_text(dir / "mitm_observations.csv", head + observations_csv(obs));
    mitm::DecryptOptions dopts;
    dopts.reveal_values = reveal;
    Json api = Json::array();
    for (const auto& x : mitm::decrypt_transcripts(result.sessions, dopts)) api.push_back(x.to_json());
    write_text(dir / "mitm_api.json", Json{{"metadata", meta}, {"exchanges", api}}.dump(2) + "\n");
}

int cmd_probe(const Globals& g, const ProbeArgs& a) {
    auto ca = mitm::LocalCa::load_or_create(a.state);
    const fs::path out = a.out.empty() ? fs::path(a.state) : fs::path(a.out);
    Json meta{{"tool", "iotaudit"},
              {"version", IOTAUDIT_VERSION},
              {"ca_fingerprint", tls::sha256_fingerprint(ca.certificate())},
              {"values", g.reveal_values ? "revealed" : "redacted"}};

    if (!a.fleet.empty()) {
        const auto fleet = mitm::FleetSpec::load(a.fleet);
        const auto sim = mitm::run_simulated_fleet(fleet, ca);
        meta["mode"] = "simulated";
        meta["fleet_devices"] = fleet.devices.size();
        meta["status"] = sim.probe.status;
        write_probe_outputs(out, meta, sim.probe, sim.observations, g.reveal_values);

        const auto expected = fleet.expected();
        std::size_t mismatches = 0;
        for (const auto& o : sim.observations) {
            auto it = expected.find({o.device_id, o.endpoint});
            if (it == expected.end() || it->second != o.verdict) {
                ++mismatches;
                std::cerr << "mismatch " << o.device_id << " " << o.endpoint << ": got " << to_string(o.verdict)
                          << (it == expected.end() ? std::string(", not expected")
                                                   : ", expected " + std::string(to_string(it->second)))
                          << "\n";
            }
        }
        if (sim.observations.size() != expected.size()) ++mismatches;
        std::cout << mitm::VerdictTable::from(sim.observations).to_csv();
        std::cout << sim.observations.size() << " observations in " << format_fixed(sim.seconds, 1) << " s, "
                  << mismatches << " mismatches\n";
        return mismatches == 0 ? kOk : kInvalid;
    }

    if (a.rules.empty()) throw ValidationError("probe needs --rules (or --simulated-fleet)");
    mitm::ProbeOptions popts;
    popts.listen_address = a.listen;
    popts.listen_port = a.port;
    const auto upstream = tls::TrustStore::load(tls::TrustStore::default_bundle());
    mitm::MitmProbe probe(popts, mitm::RedirectRules::load(a.rules), std::make_shared<mitm::NetfilterResolver>(), ca,
                          upstream);
    const auto port = probe.start();
    std::cerr << "listening on " << a.listen << ":" << port << " for " << a.duration
              << " s; redirect device TLS traffic here (iptables REDIRECT)\n";
    std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<std::int64_t>(a.duration * 1000)));
    const auto result = probe.stop();
    const auto obs = mitm::classify_sessions(result.sessions, result.end);
    meta["mode"] = "live";
    meta["duration_s"] = a.duration;
    meta["status"] = result.status;
    write_probe_outputs(out, meta, result, obs, g.reveal_values);
    for (const auto& s : result.unmatched_sources) std::cerr << "ignored traffic from " << s << " (no rule)\n";
    std::cout << result.status << ": " << result.sessions.size() << " sessions, " << obs.size()
              << " device-server verdicts; outputs in " << out.string() << "\n";
    return kOk;
}

// ---- diff-firmware

int cmd_diff(const std::string& pre, const std::string& post, const std::string& out) {
    const auto d = report::diff_firmware(report::load_bundle_summary(pre), report::load_bundle_summary(post));
    for (const auto& w : d.warnings) std::cerr << "warning: " << w << "\n";
    if (out.empty()) {
        std::cout << d.to_csv();
    } else {
        write_text(fs::path(out) / "firmware_diff.json", d.to_json().dump(2) + "\n");
        write_text(fs::path(out) / "firmware_diff.csv", d.to_csv());
    }
    if (d.mean_encrypted_pre && d.mean_encrypted_post)
        std::cerr << "mean encrypted share " << format_fixed(*d.mean_encrypted_pre, 2) << "% -> "
                  << format_fixed(*d.mean_encrypted_post, 2) << "%\n";
    return kOk;
}

// ---- report

int cmd_report(const std::string& bundle, const std::string& mitm, const std::string& out) {
    std::optional<std::string> verdicts;
    if (!mitm.empty()) verdicts = read_text(mitm);
    const auto md = report::render_markdown(report::load_bundle_summary(bundle), verdicts);
    if (out.empty())
        std::cout << md;
    else
        write_text(out, md);
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Privacy and security measurement for smart home device traffic", "audit"};
    app.set_version_flag("--version", std::string(IOTAUDIT_VERSION));
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config, "Analysis config (JSON)")->check(CLI::ExistingFile);
    app.add_option("--geo-db", g.geo_db, "Offline geolocation snapshot (CSV)")->check(CLI::ExistingFile);
    app.add_option("--th-ssl", g.th_ssl, "Entropy threshold for TLS/SSL payloads");
    app.add_option("--th-enc", g.th_enc, "Entropy threshold for other encrypted payloads");
    app.add_option("--th-text", g.th_text, "Entropy ceiling for plaintext");
    app.add_option("--byte-unit", g.byte_unit, "wire or payload");
    app.add_option("--firmware", g.firmware, "Only analyze captures tagged pre, post or none");
    app.add_flag("--reveal-values", g.reveal_values, "Write PII and API field values unredacted");
    app.add_option("--threads", g.threads, "Worker threads (0 = all cores)");

    CaptureArgs cap;
    auto* c = app.add_subcommand("capture", "Record a device while an operator walks through its operations");
    c->add_option("--process", cap.process, "Operation process file")->required()->check(CLI::ExistingFile);
    c->add_option("--iface", cap.iface, "Capture interface")->required();
    c->add_option("--out", cap.out, "Output directory")->required();
    c->add_option("--device", cap.device, "Device id")->required();
    c->add_option("--script", cap.script, "Operator script instead of the terminal")->check(CLI::ExistingFile);
    c->add_option("--capture-command", cap.command, "Capture command template with {iface} and {out}");
    c->add_flag("--no-iface-check", cap.no_iface_check, "Skip the interface existence check");

    SegmentArgs seg;
    auto* s = app.add_subcommand("segment", "Split a raw capture into per-operation files");
    s->add_option("--pcap", seg.pcap, "Raw capture")->required()->check(CLI::ExistingFile);
    s->add_option("--timestamps", seg.timestamps, "Timestamp file")->required()->check(CLI::ExistingFile);
    s->add_option("--out", seg.out, "Output directory")->required();
    s->add_option("--clock-offset-ms", seg.clock_offset_ms, "Shift applied to every window");
    s->add_flag("--merge-phases", seg.merge_phases, "Also write one file per phase");

    std::string manifest, bundle_out;
    auto* an = app.add_subcommand("analyze", "Run the analysis pipeline over a corpus");
    an->add_option("--manifest", manifest, "Corpus manifest")->required()->check(CLI::ExistingFile);
    an->add_option("--out", bundle_out, "Bundle directory")->required();

    ProbeArgs pr;
    auto* p = app.add_subcommand("probe", "Certificate replacement probe");
    p->add_option("--rules", pr.rules, "Redirect rules")->check(CLI::ExistingFile);
    p->add_option("--duration", pr.duration, "Seconds to listen");
    p->add_option("--state", pr.state, "CA state directory")->required();
    p->add_option("--simulated-fleet", pr.fleet, "Run against an in-process fleet instead of real devices")
        ->check(CLI::ExistingFile);
    p->add_option("--out", pr.out, "Output directory (default: the state directory)");
    p->add_option("--listen", pr.listen, "Listen address");
    p->add_option("--port", pr.port, "Listen port");

    std::string pre, post, diff_out;
    auto* d = app.add_subcommand("diff-firmware", "Compare bundles from before and after a firmware update");
    d->add_option("--pre", pre, "Pre-update bundle directory")->required()->check(CLI::ExistingDirectory);
    d->add_option("--post", post, "Post-update bundle directory")->required()->check(CLI::ExistingDirectory);
    d->add_option("--out", diff_out, "Output directory (default: CSV on stdout)");

    std::string rep_bundle, rep_mitm, rep_out;
    auto* r = app.add_subcommand("report", "Render a bundle as Markdown tables");
    r->add_option("--bundle", rep_bundle, "Bundle directory")->required()->check(CLI::ExistingDirectory);
    r->add_option("--mitm", rep_mitm, "mitm_verdicts.csv from a probe run")->check(CLI::ExistingFile);
    r->add_option("--out", rep_out, "Output file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInvalid;
    }

    try {
        if (*c) return cmd_capture(cap);
        if (*s) return cmd_segment(seg);
        if (*an) return cmd_analyze(g, manifest, bundle_out);
        if (*p) return cmd_probe(g, pr);
        if (*d) return cmd_diff(pre, post, diff_out);
        if (*r) return cmd_report(rep_bundle, rep_mitm, rep_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInvalid;
    }
    return kInvalid;
}
