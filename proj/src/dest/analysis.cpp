#include "iotaudit/dest/analysis.hpp"

#include "iotaudit/core/strings.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace iotaudit::dest {

std::vector<DestinationRecord> resolve_destinations(const std::vector<DeviceTraffic>& corpus, const pcap::DnsMap& dns,
                                                    GeoProvider& geo, const PartyPolicyMap& policy) {
    std::vector<DestinationRecord> out;
    for (const auto& dt : corpus) {
        std::set<IpAddress> servers;
        for (const auto& f : dt.flows)
            if (!f.is_local()) servers.insert(f.server().ip);
        for (const auto& ip : servers) {
            DestinationRecord r;
            r.device_id = dt.device.device_id;
            r.ip = ip;
            r.domains = dns.domains(ip);
            const auto g = geo.geolocate(ip);
            r.country = g.country;
            r.organization = g.organization;
            r.geo_source = g.source;
            const auto attribution = classify_party(r, &dt.device, policy);
            r.party = attribution.party;
            r.evidence = attribution.evidence;
            out.push_back(std::move(r));
        }
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::tie(a.device_id, a.ip) < std::tie(b.device_id, b.ip);
    });
    return out;
}

DestinationIndex index_destinations(const std::vector<DestinationRecord>& records) {
    DestinationIndex idx;
    for (const auto& r : records) idx[{r.device_id, r.ip}] = r;
    return idx;
}

ProportionTable proportion_table(const std::map<std::string, std::map<std::string, std::uint64_t>>& bytes,
                                 const std::map<std::string, std::string>& category_of) {
    ProportionTable t;
    std::map<std::string, std::uint64_t> raw_by_country;
    std::uint64_t raw_total = 0;
    std::size_t devices_with_traffic = 0;
    for (const auto& [device, by_country] : bytes) {
        std::uint64_t n = 0;
        for (const auto& [c, b] : by_country) n += b;
        if (n == 0) {
            t.warnings.push_back("device " + device + " has no traffic to global destinations; excluded");
            continue;
        }
        ++devices_with_traffic;
        auto& shares = t.per_device[device];
        for (const auto& [c, b] : by_country) {
            if (b == 0) continue;
            shares[c] = static_cast<double>(b) / static_cast<double>(n);
            raw_by_country[c] += b;
        }
        raw_total += n;
        auto cat_it = category_of.find(device);
        const std::string category = cat_it == category_of.end() ? "unknown" : cat_it->second;
        ++t.category_devices[category];
        for (const auto& [c, s] : shares) {
            t.categories[category][c] += s;
            t.overall[c] += s;
        }
    }
    for (auto& [cat, shares] : t.categories)
        for (auto& [c, s] : shares) s /= static_cast<double>(t.category_devices[cat]);
    for (auto& [c, s] : t.overall) s /= static_cast<double>(devices_with_traffic);
    for (const auto& [c, b] : raw_by_country)
        t.overall_raw_bytes[c] = static_cast<double>(b) / static_cast<double>(raw_total);
    return t;
}

ProportionTable proportion_table(const std::vector<DeviceTraffic>& corpus, const DestinationIndex& dests, ByteUnit unit,
                                 std::optional<PhaseLabel> phase) {
    std::map<std::string, std::map<std::string, std::uint64_t>> bytes;
    std::map<std::string, std::string> category_of;
    for (const auto& dt : corpus) {
        const auto& id = dt.device.device_id;
        category_of[id] = dt.device.category;
        auto& row = bytes[id];
        for (const auto& f : dt.flows) {
            if (f.is_local()) continue;
            if (phase && f.phase != phase) continue;
            auto it = dests.find({id, f.server().ip});
            const std::string country = it == dests.end() ? kUnknown : it->second.country;
            row[country] += pcap::flow_bytes(f, unit);
        }
    }
    return proportion_table(bytes, category_of);
}

namespace {

Json shares_json(const CountryShares& s) {
    Json j = Json::object();
    for (const auto& [c, v] : s) j[c] = v;
    return j;
}

} // namespace

Json ProportionTable::to_json() const {
    Json cats = Json::object();
    for (const auto& [cat, shares] : categories)
        cats[cat] = {{"devices", category_devices.at(cat)}, {"shares", shares_json(shares)}};
    Json devs = Json::object();
    for (const auto& [d, shares] : per_device) devs[d] = shares_json(shares);
    return {{"categories", cats},
            {"overall", shares_json(overall)},
            {"overall_raw_bytes", shares_json(overall_raw_bytes)},
            {"per_device", devs},
            {"warnings", warnings}};
}

Json ProportionTable::sankey() const {
    Json links = Json::array();
    for (const auto& [cat, shares] : categories)
        for (const auto& [c, s] : shares) links.push_back({{"source", cat}, {"target", c}, {"value", s}});
    return {{"links", links}};
}

std::string table2_column(const pcap::DeviceMetadata& d) {
    static const std::set<std::string> named{"camera", "doorbell", "hub",   "humidifier",
                                             "light",  "plug",     "sensor", "speaker"};
    const auto c = ascii_lower(d.category);
    return named.count(c) ? c : "other devices";
}

double PartyCountTable::at(const std::string& row, const std::string& column, Party p) const {
    auto r = rows.find(row);
    if (r == rows.end()) return 0.0;
    auto c = r->second.find(column);
    if (c == r->second.end()) return 0.0;
    auto v = c->second.find(p);
    return v == c->second.end() ? 0.0 : v->second;
}

PartyCountTable server_party_counts(const std::vector<DeviceTraffic>& corpus, const DestinationIndex& dests,
                                    const ColumnOf& column) {
    PartyCountTable t;
    const std::vector<std::string> row_names{"SETUP", "IDLE", "INTERACTION", "DELETION", "TOTAL"};
    constexpr Party parties[] = {Party::First, Party::Support, Party::Third};
    for (const auto& dt : corpus) {
        const auto col = column ? column(dt.device) : dt.device.category;
        ++t.column_devices[col];
        // row -> party -> distinct ips
        std::map<std::string, std::map<Party, std::set<IpAddress>>> seen;
        for (const auto& f : dt.flows) {
            if (f.is_local()) continue;
            const auto ip = f.server().ip;
            auto it = dests.find({dt.device.device_id, ip});
            const Party party = it == dests.end() ? Party::Third : it->second.party;
            if (f.phase) seen[std::string(to_string(*f.phase))][party].insert(ip);
            seen["TOTAL"][party].insert(ip);
        }
        for (const auto& row : row_names)
            for (auto p : parties) t.rows[row][col][p] += static_cast<double>(seen[row][p].size());
    }
    for (auto& [row, cols] : t.rows)
        for (auto& [col, by_party] : cols)
            for (auto& [p, v] : by_party) v /= static_cast<double>(t.column_devices[col]);
    return t;
}

Json PartyCountTable::to_json() const {
    Json j = Json::object();
    for (const auto& [row, cols] : rows)
        for (const auto& [col, by_party] : cols)
            for (const auto& [p, v] : by_party) j[row][col][std::string(to_string(p))] = v;
    Json devs = Json::object();
    for (const auto& [c, n] : column_devices) devs[c] = n;
    return {{"rows", j}, {"column_devices", devs}};
}

std::string PartyCountTable::to_csv() const {
    std::ostringstream out;
    out << "phase,column,devices,party,mean_servers\n";
    for (const auto* row : {"SETUP", "IDLE", "INTERACTION", "DELETION", "TOTAL"}) {
        auto r = rows.find(row);
        if (r == rows.end()) continue;
        for (const auto& [col, by_party] : r->second)
            for (const auto& [p, v] : by_party)
                out << csv_row({row, col, std::to_string(column_devices.at(col)), std::string(to_string(p)),
                                format_fixed(v, 4)})
                    << "\n";
    }
    return out.str();
}

std::vector<OrgCount> organization_ranking(const std::vector<DestinationRecord>& records) {
    std::map<std::string, std::set<std::string>> devices;
    for (const auto& r : records)
        if (r.organization != kUnknown && !r.organization.empty()) devices[r.organization].insert(r.device_id);
    std::vector<OrgCount> out;
    for (const auto& [org, ds] : devices) out.push_back({org, ds.size()});
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.devices > b.devices; });
    return out;
}

std::string destinations_csv(const std::vector<DestinationRecord>& records) {
    std::ostringstream out;
    out << "device_id,ip,domains,country,organization,party,evidence,geo_source\n";
    for (const auto& r : records) {
        std::string domains;
        for (const auto& d : r.domains) domains += (domains.empty() ? "" : ";") + d;
        out << csv_row({r.device_id, r.ip.to_string(), domains, r.country, r.organization,
                        std::string(to_string(r.party)), r.evidence, std::string(to_string(r.geo_source))})
            << "\n";
    }
    return out.str();
}

std::string org_ranking_csv(const std::vector<OrgCount>& ranking) {
    std::ostringstream out;
    out << "rank,organization,device_count\n";
    for (std::size_t i = 0; i < ranking.size(); ++i)
        out << csv_row({std::to_string(i + 1), ranking[i].organization, std::to_string(ranking[i].devices)}) << "\n";
    return out.str();
}

} // namespace iotaudit::dest
