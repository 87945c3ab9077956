#pragma once

#include "iotaudit/core/ip.hpp"
#include "iotaudit/core/json.hpp"
#include "iotaudit/core/time.hpp"

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace iotaudit::dest {

inline constexpr const char* kUnknown = "UNKNOWN";

enum class GeoSourceKind { Offline, Cache, Online, None };
std::string_view to_string(GeoSourceKind k);

struct GeoResult {
    std::string country = kUnknown; // ISO 3166-1 alpha-2
    std::string organization = kUnknown;
    std::string asn;
    GeoSourceKind source = GeoSourceKind::None;
    std::string provenance; // snapshot id, or endpoint for online answers
};

/// Range table loaded from CSV: `start_ip,end_ip,country,org,asn`.
/// A `# snapshot: <id>` comment names the snapshot.
class OfflineGeoDb {
public:
    static OfflineGeoDb load(const std::filesystem::path& path);
    static OfflineGeoDb parse(std::string_view csv_text);

    std::optional<GeoResult> lookup(const IpAddress& ip) const;
    const std::string& snapshot() const { return snapshot_; }
    std::size_t size() const { return ranges_.size(); }

private:
    struct Range {
        IpAddress start, end;
        std::string country, org, asn;
    };
    std::vector<Range> ranges_; // sorted by start, non-overlapping
    std::string snapshot_;
};

/// Case-insensitive organization alias table. Unlisted names pass through trimmed.
class OrgAliases {
public:
    static OrgAliases load(const std::filesystem::path& path);
    static OrgAliases from_json(const Json& j);
    void add(const std::string& alias, const std::string& canonical);
    std::string normalize(std::string_view org) const;

private:
    std::map<std::string, std::string> map_; // lower-cased alias -> canonical
};

/// Something that can be asked about one address over the network.
class OnlineGeoSource {
public:
    virtual ~OnlineGeoSource() = default;
    virtual std::optional<GeoResult> query(const IpAddress& ip) = 0;
    virtual std::string describe() const = 0;
};

/// GET `{endpoint}/{ip}` expecting JSON with `country` and `org` fields
/// (`countryCode` is accepted for country). Plain HTTP only. Requests are
/// spaced at least `min_interval` apart.
class HttpGeoSource : public OnlineGeoSource {
public:
    explicit HttpGeoSource(std::string endpoint, std::chrono::milliseconds min_interval = std::chrono::milliseconds(1000),
                           std::chrono::seconds timeout = std::chrono::seconds(5));
    std::optional<GeoResult> query(const IpAddress& ip) override;
    std::string describe() const override { return endpoint_; }

private:
    std::string endpoint_, host_, base_path_;
    int port_ = 80;
    std::chrono::milliseconds interval_;
    std::chrono::seconds timeout_;
    std::optional<std::chrono::steady_clock::time_point> last_;
    std::mutex mu_;
};

/// Persistent JSON store of online answers, keyed by address text.
class GeoCache {
public:
    static GeoCache load(const std::filesystem::path& path); // missing file = empty cache
    std::optional<GeoResult> get(const IpAddress& ip) const;
    void put(const IpAddress& ip, const GeoResult& r, Timestamp fetched);
    void save(const std::filesystem::path& path) const;
    std::size_t size() const { return entries_.size(); }

private:
    std::map<std::string, Json> entries_;
};

struct GeoCoverage {
    std::size_t offline = 0, cache = 0, online = 0, unknown = 0;
    std::set<IpAddress> unknown_ips;
    Json to_json() const;
};

/// Offline snapshot first, then the persistent cache, then the online
/// source (at most one query per address per provider lifetime).
class GeoProvider {
public:
    GeoProvider() = default;
    GeoProvider(std::shared_ptr<const OfflineGeoDb> offline, OrgAliases aliases);

    void set_online(std::unique_ptr<OnlineGeoSource> online, std::optional<std::filesystem::path> cache_path);
    /// Flushes the cache when one is attached.
    void save_cache() const;

    /// Throws PreconditionError for non-global addresses.
    GeoResult geolocate(const IpAddress& ip);

    const GeoCoverage& coverage() const { return coverage_; }
    std::string snapshot() const;
    const OrgAliases& aliases() const { return aliases_; }

private:
    GeoResult finish(GeoResult r, const IpAddress& ip);

    std::shared_ptr<const OfflineGeoDb> offline_;
    OrgAliases aliases_;
    std::unique_ptr<OnlineGeoSource> online_;
    std::optional<std::filesystem::path> cache_path_;
    GeoCache cache_;
    std::map<IpAddress, GeoResult> memo_;
    GeoCoverage coverage_;
    mutable std::mutex mu_;
};

} // namespace iotaudit::dest
