#include "iotaudit/pcap/device.hpp"

#include "iotaudit/core/error.hpp"
#include "iotaudit/core/strings.hpp"

#include <fstream>
#include <set>



namespace iotaudit::pcap {

bool is_known_category(std::string_view category) {
    const auto lower = ascii_lower(category);
    for (auto c : kDeviceCategories)
        if (c == lower) return true;
    return false;
}

bool DeviceMetadata::owns(const IpAddress& ip) const {
    for (const auto& a : ips)
        if (a == ip) return true;
    return false;
}

bool DeviceMetadata::owns(const MacAddress& mac) const {
    for (const auto& m : macs)
        if (m == mac) return true;
    return false;
}

DeviceMetadata device_from_json(const nlohmann::json& j) {
    DeviceMetadata d;
    try {
        d.device_id = j.at("device_id").get<std::string>();
        d.display_name = j.value("display_name", d.device_id);
        d.category = ascii_lower(j.at("category").get<std::string>());
        d.brand = j.value("brand", "");
        for (const auto& m : j.value("macs", std::vector<std::string>{})) {
            auto mac = MacAddress::parse(m);
            if (!mac) throw ValidationError("device '" + d.device_id + "': bad MAC '" + m + "'");
            d.macs.push_back(*mac);
        }
        for (const auto& s : j.value("ips", std::vector<std::string>{})) {
            auto ip = IpAddress::parse(s);
            if (!ip) throw ValidationError("device '" + d.device_id + "': bad IP '" + s + "'");
            d.ips.push_back(*ip);
        }
        d.first_party_patterns = j.value("first_party_patterns", std::vector<std::string>{});
        d.app_vendors = j.value("app_vendors", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("device metadata: ") + e.what());
    }
    if (d.device_id.empty()) throw ValidationError("device metadata: empty device_id");
    if (!is_known_category(d.category))
        throw ValidationError("device '" + d.device_id + "': unknown category '" + d.category + "'");
    return d;
}

nlohmann::json device_to_json(const DeviceMetadata& d) {
    nlohmann::json j;
    j["device_id"] = d.device_id;
    j["display_name"] = d.display_name;
    j["category"] = d.category;
    j["brand"] = d.brand;
    auto& macs = j["macs"] = nlohmann::json::array();
    for (const auto& m : d.macs) macs.push_back(m.to_string());
    auto& ips = j["ips"] = nlohmann::json::array();
    for (const auto& a : d.ips) ips.push_back(a.to_string());
    j["first_party_patterns"] = d.first_party_patterns;
    j["app_vendors"] = d.app_vendors;
    return j;
}

std::vector<DeviceMetadata> devices_from_json(const nlohmann::json& j) {
    const nlohmann::json& list = j.is_array() ? j : j.at("devices");
    std::vector<DeviceMetadata> out;
    std::set<std::string> seen;
    for (const auto& item : list) {
        auto d = device_from_json(item);
        if (!seen.insert(d.device_id).second) throw ValidationError("duplicate device_id '" + d.device_id + "'");
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<DeviceMetadata> load_devices(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open device metadata '" + path.string() + "'");
    try {
        return devices_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

} // namespace iotaudit::pcap
