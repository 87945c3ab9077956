#include "iotaudit/report/diff.hpp"

#include "iotaudit/core/error.hpp"
#include "iotaudit/core/strings.hpp"

#include <algorithm>
#include <iterator>

namespace iotaudit::report {

namespace {

std::set<std::string> string_set(const Json& device, const char* key) {
    std::set<std::string> out;
    if (device.contains(key))
        for (const auto& v : device.at(key)) out.insert(v.get<std::string>());
    return out;
}

std::set<std::string> minus(const std::set<std::string>& a, const std::set<std::string>& b) {
    std::set<std::string> out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
    return out;
}

std::optional<double> encrypted(const Json& device) {
    if (!device.contains("shares")) return std::nullopt;
    return device.at("shares").at("encrypted").get<double>();
}

std::string joined(const std::set<std::string>& s) {
    std::string out;
    for (const auto& v : s) out += (out.empty() ? "" : ";") + v;
    return out;
}

std::string opt_fixed(const std::optional<double>& v) { return v ? format_fixed(*v, 2) : ""; }

} // namespace

std::optional<double> DeviceDelta::encrypted_delta() const {
    if (!encrypted_pre || !encrypted_post) return std::nullopt;
    return *encrypted_post - *encrypted_pre;
}

bool DeviceDelta::empty() const {
    const auto d = encrypted_delta();
    return protocols_added.empty() && protocols_removed.empty() && destinations_added.empty() &&
           destinations_removed.empty() && (!d || *d == 0.0) && encrypted_pre.has_value() == encrypted_post.has_value();
}

FirmwareDiff diff_firmware(const Json& pre, const Json& post) {
    FirmwareDiff diff;
    const auto& a = pre.at("devices");
    const auto& b = post.at("devices");
    for (const auto& [id, _] : a.items())
        if (!b.contains(id)) diff.only_pre.push_back(id);
    for (const auto& [id, _] : b.items())
        if (!a.contains(id)) diff.only_post.push_back(id);
    double sum_pre = 0, sum_post = 0;
    std::size_t n = 0;
    for (const auto& [id, dev_pre] : a.items()) {
        if (!b.contains(id)) continue;
        const auto& dev_post = b.at(id);
        DeviceDelta d;
        d.device_id = id;
        const auto p0 = string_set(dev_pre, "protocols"), p1 = string_set(dev_post, "protocols");
        d.protocols_added = minus(p1, p0);
        d.protocols_removed = minus(p0, p1);
        const auto d0 = string_set(dev_pre, "destinations"), d1 = string_set(dev_post, "destinations");
        d.destinations_added = minus(d1, d0);
        d.destinations_removed = minus(d0, d1);
        d.encrypted_pre = encrypted(dev_pre);
        d.encrypted_post = encrypted(dev_post);
        if (d.encrypted_pre && d.encrypted_post) {
            sum_pre += *d.encrypted_pre;
            sum_post += *d.encrypted_post;
            ++n;
        }
        diff.devices.push_back(std::move(d));
    }
    if (diff.devices.empty()) throw ValidationError("pre and post bundles share no devices");
    if (n > 0) {
        diff.mean_encrypted_pre = sum_pre / static_cast<double>(n);
        diff.mean_encrypted_post = sum_post / static_cast<double>(n);
    }
    for (const char* key : {"geo_snapshot", "thresholds", "byte_unit", "magic_table", "audit_policy", "version"}) {
        const auto& m0 = pre.at("metadata");
        const auto& m1 = post.at("metadata");
        if (m0.value(key, Json()) != m1.value(key, Json()))
            diff.warnings.push_back(std::string("bundles differ in ") + key + "; deltas may reflect configuration");
    }
    return diff;
}

Json FirmwareDiff::to_json() const {
    Json devs = Json::array();
    for (const auto& d : devices) {
        Json dj{{"device_id", d.device_id},
                {"protocols_added", d.protocols_added},
                {"protocols_removed", d.protocols_removed},
                {"destinations_added", d.destinations_added},
                {"destinations_removed", d.destinations_removed}};
        dj["encrypted_pre"] = d.encrypted_pre ? Json(*d.encrypted_pre) : Json();
        dj["encrypted_post"] = d.encrypted_post ? Json(*d.encrypted_post) : Json();
        const auto delta = d.encrypted_delta();
        dj["encrypted_delta"] = delta ? Json(*delta) : Json();
        devs.push_back(dj);
    }
    Json j{{"devices", devs}, {"only_pre", only_pre}, {"only_post", only_post}, {"warnings", warnings}};
    j["mean_encrypted_pre"] = mean_encrypted_pre ? Json(*mean_encrypted_pre) : Json();
    j["mean_encrypted_post"] = mean_encrypted_post ? Json(*mean_encrypted_post) : Json();
    return j;
}

std::string FirmwareDiff::to_csv() const {
    std::string out = "device_id,protocols_added,protocols_removed,encrypted_pre,encrypted_post,encrypted_delta,"
                      "destinations_added,destinations_removed\n";
    for (const auto& d : devices)
        out += csv_row({d.device_id, joined(d.protocols_added), joined(d.protocols_removed), opt_fixed(d.encrypted_pre),
                        opt_fixed(d.encrypted_post), opt_fixed(d.encrypted_delta()), joined(d.destinations_added),
                        joined(d.destinations_removed)}) +
               "\n";
    return out;
}

} // namespace iotaudit::report
