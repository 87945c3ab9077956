#include "iotaudit/dest/geo.hpp"

#include "iotaudit/core/error.hpp"
#include "iotaudit/core/strings.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace iotaudit::dest {

std::string_view to_string(GeoSourceKind k) {
    switch (k) {
    case GeoSourceKind::Offline: return "offline";
    case GeoSourceKind::Cache: return "cache";
    case GeoSourceKind::Online: return "online";
    case GeoSourceKind::None: return "none";
    }
    return "none";
}

OfflineGeoDb OfflineGeoDb::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open geo snapshot " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

OfflineGeoDb OfflineGeoDb::parse(std::string_view text) {
    OfflineGeoDb db;
    std::size_t line_no = 0;
    for (auto line : split(text, '\n')) {
        ++line_no;
        auto t = trim(line);
        if (t.empty()) continue;
        if (t[0] == '#') {
            auto body = trim(t.substr(1));
            if (starts_with_icase(body, "snapshot:")) db.snapshot_ = std::string(trim(body.substr(9)));
            continue;
        }
        auto cols = parse_csv_line(t);
        if (cols.size() == 5 && cols[0] == "start_ip") continue;
        if (cols.size() != 5) throw ParseError("geo snapshot line " + std::to_string(line_no) + ": expected 5 columns");
        Range r{IpAddress::require(cols[0]), IpAddress::require(cols[1]), cols[2], cols[3], cols[4]};
        if (r.start.family() != r.end.family() || r.end < r.start)
            throw ParseError("geo snapshot line " + std::to_string(line_no) + ": bad range");
        db.ranges_.push_back(std::move(r));
    }
    std::sort(db.ranges_.begin(), db.ranges_.end(), [](const Range& a, const Range& b) { return a.start < b.start; });
    for (std::size_t i = 1; i < db.ranges_.size(); ++i)
        if (db.ranges_[i].start <= db.ranges_[i - 1].end)
            throw ParseError("geo snapshot: overlapping ranges at " + db.ranges_[i].start.to_string());
    if (db.snapshot_.empty()) db.snapshot_ = "unversioned";
    return db;
}

std::optional<GeoResult> OfflineGeoDb::lookup(const IpAddress& ip) const {
    auto it = std::upper_bound(ranges_.begin(), ranges_.end(), ip,
                               [](const IpAddress& v, const Range& r) { return v < r.start; });
    if (it == ranges_.begin()) return std::nullopt;
    --it;
    if (ip.family() != it->start.family() || it->end < ip) return std::nullopt;
    GeoResult r;
    r.country = it->country.empty() ? kUnknown : it->country;
    r.organization = it->org.empty() ? kUnknown : it->org;
    r.asn = it->asn;
    r.source = GeoSourceKind::Offline;
    r.provenance = snapshot_;
    return r;
}

OrgAliases OrgAliases::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open alias table " + path.string());
    try {
        return from_json(Json::parse(in));
    } catch (const Json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

OrgAliases OrgAliases::from_json(const Json& j) {
    OrgAliases a;
    const Json& table = j.contains("aliases") ? j["aliases"] : j;
    if (!table.is_object()) throw ValidationError("alias table must be an object of alias -> organization");
    for (const auto& [alias, canonical] : table.items()) a.add(alias, canonical.get<std::string>());
    return a;
}

void OrgAliases::add(const std::string& alias, const std::string& canonical) {
    map_[ascii_lower(trim(alias))] = canonical;
}

std::string OrgAliases::normalize(std::string_view org) const {
    auto t = trim(org);
    auto it = map_.find(ascii_lower(t));
    return it == map_.end() ? std::string(t) : it->second;
}

GeoCache GeoCache::load(const std::filesystem::path& path) {
    GeoCache c;
    std::ifstream in(path);
    if (!in) return c;
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ParseError("geo cache " + path.string() + ": " + e.what());
    }
    for (const auto& [k, v] : j.items()) c.entries_[k] = v;
    return c;
}

std::optional<GeoResult> GeoCache::get(const IpAddress& ip) const {
    auto it = entries_.find(ip.to_string());
    if (it == entries_.end()) return std::nullopt;
    GeoResult r;
    r.country = it->second.value("country", kUnknown);
    r.organization = it->second.value("org", kUnknown);
    r.asn = it->second.value("asn", "");
    r.source = GeoSourceKind::Cache;
    r.provenance = it->second.value("source", "") + " @ " + it->second.value("fetched", "");
    return r;
}

void GeoCache::put(const IpAddress& ip, const GeoResult& r, Timestamp fetched) {
    entries_[ip.to_string()] = {{"country", r.country},
                                {"org", r.organization},
                                {"asn", r.asn},
                                {"source", r.provenance},
                                {"fetched", format_iso8601_ms(fetched)}};
}

void GeoCache::save(const std::filesystem::path& path) const {
    Json j = Json::object();
    for (const auto& [k, v] : entries_) j[k] = v;
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw IoError("cannot write geo cache " + tmp.string());
        out << j.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
}

Json GeoCoverage::to_json() const {
    Json ips = Json::array();
    for (const auto& ip : unknown_ips) ips.push_back(ip.to_string());
    return {{"offline", offline}, {"cache", cache}, {"online", online}, {"unknown", unknown}, {"unknown_ips", ips}};
}

GeoProvider::GeoProvider(std::shared_ptr<const OfflineGeoDb> offline, OrgAliases aliases)
    : offline_(std::move(offline)), aliases_(std::move(aliases)) {}

void GeoProvider::set_online(std::unique_ptr<OnlineGeoSource> online, std::optional<std::filesystem::path> cache_path) {
    std::lock_guard lock(mu_);
    online_ = std::move(online);
    cache_path_ = std::move(cache_path);
    if (cache_path_) cache_ = GeoCache::load(*cache_path_);
}

void GeoProvider::save_cache() const {
    std::lock_guard lock(mu_);
    if (cache_path_) cache_.save(*cache_path_);
}

std::string GeoProvider::snapshot() const { return offline_ ? offline_->snapshot() : std::string("none"); }

GeoResult GeoProvider::finish(GeoResult r, const IpAddress& ip) {
    if (r.organization != kUnknown) r.organization = aliases_.normalize(r.organization);
    switch (r.source) {
    case GeoSourceKind::Offline: ++coverage_.offline; break;
    case GeoSourceKind::Cache: ++coverage_.cache; break;
    case GeoSourceKind::Online: ++coverage_.online; break;
    case GeoSourceKind::None:
        ++coverage_.unknown;
        coverage_.unknown_ips.insert(ip);
        break;
    }
    memo_[ip] = r;
    return r;
}

GeoResult GeoProvider::geolocate(const IpAddress& ip) {
    if (ip.is_local()) throw PreconditionError("geolocate: " + ip.to_string() + " is not a global address");
    std::lock_guard lock(mu_);
    if (auto it = memo_.find(ip); it != memo_.end()) return it->second;
    if (offline_)
        if (auto r = offline_->lookup(ip)) return finish(*r, ip);
    if (auto r = cache_.get(ip)) return finish(*r, ip);
    if (online_) {
        if (auto r = online_->query(ip)) {
            r->source = GeoSourceKind::Online;
            if (r->provenance.empty()) r->provenance = online_->describe();
            cache_.put(ip, *r, now_utc());
            return finish(*r, ip);
        }
    }
    return finish(GeoResult{}, ip);
}

} // namespace iotaudit::dest
