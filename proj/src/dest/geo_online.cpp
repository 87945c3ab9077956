#include "iotaudit/dest/geo.hpp"

#include "iotaudit/core/error.hpp"

#include <httplib.h>

#include <thread>

namespace iotaudit::dest {

HttpGeoSource::HttpGeoSource(std::string endpoint, std::chrono::milliseconds min_interval, std::chrono::seconds timeout)
    : endpoint_(std::move(endpoint)), interval_(min_interval), timeout_(timeout) {
    constexpr std::string_view scheme = "http://";
    if (endpoint_.rfind(scheme, 0) != 0)
        throw ValidationError("geo endpoint must be a plain http:// URL: " + endpoint_);
    auto rest = endpoint_.substr(scheme.size());
    auto slash = rest.find('/');
    auto authority = rest.substr(0, slash);
    base_path_ = slash == std::string::npos ? "" : rest.substr(slash);
    while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
    auto colon = authority.rfind(':');
    if (colon != std::string::npos && authority.find(']') == std::string::npos) {
        host_ = authority.substr(0, colon);
        port_ = std::stoi(authority.substr(colon + 1));
    } else {
        host_ = authority;
    }
    if (host_.empty()) throw ValidationError("geo endpoint has no host: " + endpoint_);
}

std::optional<GeoResult> HttpGeoSource::query(const IpAddress& ip) {
    std::lock_guard lock(mu_);
    if (last_) {
        auto wait = *last_ + interval_ - std::chrono::steady_clock::now();
        if (wait > std::chrono::steady_clock::duration::zero()) std::this_thread::sleep_for(wait);
    }
    last_ = std::chrono::steady_clock::now();

    httplib::Client client(host_, port_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    auto res = client.Get(base_path_ + "/" + ip.to_string());
    if (!res || res->status != 200) return std::nullopt;
    Json j;
    try {
        j = Json::parse(res->body);
    } catch (const Json::parse_error&) {
        return std::nullopt;
    }
    if (!j.is_object()) return std::nullopt;
    GeoResult r;
    auto field = [&](std::initializer_list<const char*> names) -> std::string {
        for (auto n : names)
            if (j.contains(n) && j[n].is_string() && !j[n].get<std::string>().empty()) return j[n].get<std::string>();
        return kUnknown;
    };
    r.country = field({"country", "countryCode"});
    r.organization = field({"org", "organization"});
    if (j.contains("as") && j["as"].is_string()) r.asn = j["as"].get<std::string>();
    if (r.country == kUnknown && r.organization == kUnknown) return std::nullopt;
    r.source = GeoSourceKind::Online;
    r.provenance = endpoint_;
    return r;
}

} // namespace iotaudit::dest
