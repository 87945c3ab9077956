#include "iotaudit/report/render.hpp"

#include "iotaudit/core/strings.hpp"

#include <set>
#include <sstream>

namespace iotaudit::report {

namespace {

std::string pct(const Json& v) { return v.is_number() ? format_fixed(v.get<double>(), 2) : "-"; }

void table(std::ostringstream& out, const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    auto line = [&](const std::vector<std::string>& cells) {
        out << '|';
        for (const auto& c : cells) out << ' ' << c << " |";
        out << '\n';
    };
    line(header);
    out << '|';
    for (std::size_t i = 0; i < header.size(); ++i) out << " --- |";
    out << '\n';
    for (const auto& r : rows) line(r);
    out << '\n';
}

} // namespace

std::string render_markdown(const Json& summary, const std::optional<std::string>& mitm_verdicts_csv) {
    std::ostringstream out;
    const auto& meta = summary.at("metadata");
    const auto& t = summary.at("tables");
    out << "# IoT traffic audit\n\n";
    out << "iotaudit " << meta.value("version", "?") << ", geo snapshot `" << meta.value("geo_snapshot", "?")
        << "`, byte unit " << meta.value("byte_unit", "?") << ", PII catalog `" << meta.value("pii_catalog", "?")
        << "`, firmware " << meta.value("firmware", "all") << ".\n\n";
    const auto& caps = summary.at("captures");
    out << caps.at("used").get<std::size_t>() << " of " << caps.at("selected").get<std::size_t>()
        << " captures analyzed";
    if (caps.at("quarantined").get<std::size_t>() > 0)
        out << ", " << caps.at("quarantined").get<std::size_t>() << " quarantined (see errors.json)";
    out << ".\n\n";

    out << "## Destination countries\n\nShare of traffic per category, averaged over devices (percent).\n\n";
    {
        const auto& cats = t.at("proportions").at("categories");
        std::set<std::string> countries;
        for (const auto& [cat, c] : cats.items())
            for (const auto& [country, _] : c.at("shares").items()) countries.insert(country);
        std::vector<std::string> header{"category", "devices"};
        header.insert(header.end(), countries.begin(), countries.end());
        std::vector<std::vector<std::string>> rows;
        for (const auto& [cat, c] : cats.items()) {
            std::vector<std::string> r{cat, std::to_string(c.at("devices").get<std::size_t>())};
            for (const auto& country : countries) {
                const auto& s = c.at("shares");
                r.push_back(s.contains(country) ? format_fixed(100.0 * s.at(country).get<double>(), 2) : "0.00");
            }
            rows.push_back(r);
        }
        std::vector<std::string> overall{"all devices", ""};
        const auto& o = t.at("proportions").at("overall");
        for (const auto& country : countries)
            overall.push_back(o.contains(country) ? format_fixed(100.0 * o.at(country).get<double>(), 2) : "0.00");
        rows.push_back(overall);
        table(out, header, rows);
    }

    out << "## Organizations by device count\n\n";
    {
        std::vector<std::vector<std::string>> rows;
        for (const auto& o : t.at("org_ranking"))
            rows.push_back({o.at("organization").get<std::string>(), std::to_string(o.at("devices").get<std::size_t>())});
        table(out, {"organization", "devices"}, rows);
    }

    out << "## Encryption by category and phase\n\nPercent of bytes: encrypted / unknown / unencrypted.\n\n";
    {
        std::vector<std::vector<std::string>> rows;
        for (const auto& [cat, phases] : t.at("heatmap").items())
            for (const char* row : {"SETUP", "INTERACTION", "IDLE", "DELETION", "FULL"}) {
                if (!phases.contains(row)) continue;
                const auto& c = phases.at(row);
                if (c.is_null()) {
                    rows.push_back({cat, row, "-", "-", "-"});
                    continue;
                }
                rows.push_back({cat, row, pct(c.at("encrypted")), pct(c.at("unknown")), pct(c.at("unencrypted"))});
            }
        table(out, {"category", "phase", "encrypted", "unknown", "unencrypted"}, rows);
    }

    out << "## Encryption protocols\n\nDevices using each version.\n\n";
    {
        const auto& p = t.at("protocols");
        std::vector<std::string> versions;
        for (const auto& [v, _] : p.at("FULL").items()) versions.push_back(v);
        std::vector<std::string> header{"phase"};
        header.insert(header.end(), versions.begin(), versions.end());
        std::vector<std::vector<std::string>> rows;
        for (const char* row : {"SETUP", "IDLE", "INTERACTION", "DELETION", "FULL"}) {
            std::vector<std::string> r{row};
            for (const auto& v : versions) r.push_back(std::to_string(p.at(row).at(v).get<std::size_t>()));
            rows.push_back(r);
        }
        table(out, header, rows);
        out << "Undetermined TLS flows: " << t.at("undetermined_tls_flows").get<std::size_t>() << ".\n\n";
    }

    out << "## Certificates\n\n";
    {
        const auto& m = t.at("cert_models");
        out << m.at("certificate").get<std::size_t>() << " devices present certificates, "
            << m.at("psk").get<std::size_t>() << " use PSK only; " << m.at("cert_opaque_sessions").get<std::size_t>()
            << " TLS 1.3 sessions hide their certificates.\n\n";
        std::vector<std::vector<std::string>> rows;
        for (const auto& [kind, cols] : t.at("cert_findings").items())
            for (const auto& [col, phases] : cols.items())
                rows.push_back({kind, col, std::to_string(phases.value("FULL", std::size_t{0}))});
        table(out, {"finding", "column", "devices"}, rows);
    }

    out << "## PII in unencrypted traffic\n\n";
    {
        const auto& p = t.at("pii");
        out << p.at("flows_scanned").get<std::size_t>() << " flows scanned.\n\n";
        std::vector<std::vector<std::string>> rows;
        for (const auto& [label, n] : p.at("hits_by_label").items())
            rows.push_back({label, std::to_string(n.get<std::size_t>())});
        table(out, {"label", "hits"}, rows);
    }

    if (mitm_verdicts_csv) {
        out << "## Certificate replacement probe\n\n";
        std::vector<std::vector<std::string>> rows;
        std::istringstream in(*mitm_verdicts_csv);
        std::string line;
        bool header = true;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            if (header) {
                header = false;
                continue;
            }
            rows.push_back(parse_csv_line(line));
        }
        table(out, {"verdict", "devices", "servers"}, rows);
    }
    return out.str();
}

} // namespace iotaudit::report
