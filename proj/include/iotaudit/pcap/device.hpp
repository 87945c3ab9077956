#pragma once

#include "iotaudit/core/ip.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "iotaudit/core/json.hpp"

namespace iotaudit::pcap {

/// The device categories the toolkit reports on.
inline constexpr std::string_view kDeviceCategories[] = {"camera", "plug",    "speaker", "hub",
                                                         "humidifier", "light", "doorbell", "sensor",
                                                         "mirror", "tv",      "cleaner", "pet feeder"};

bool is_known_category(std::string_view category);

struct DeviceMetadata {
    std::string device_id;
    std::string display_name;
    std::string category;
    std::string brand;
    std::vector<MacAddress> macs;
    std::vector<IpAddress> ips;
    /// Organization names or domain suffixes (anything containing a dot) owned
    /// by the manufacturer.
    std::vector<std::string> first_party_patterns;
    /// Companion-app vendors; matched like first_party_patterns.
    std::vector<std::string> app_vendors;

    bool owns(const IpAddress& ip) const;
    bool owns(const MacAddress& mac) const;
};

DeviceMetadata device_from_json(const nlohmann::json& j);
nlohmann::json device_to_json(const DeviceMetadata& d);

/// Reads `{"devices": [...]}` or a bare array. Throws ValidationError on
/// duplicate ids or unknown categories.
std::vector<DeviceMetadata> load_devices(const std::filesystem::path& path);
std::vector<DeviceMetadata> devices_from_json(const nlohmann::json& j);

} // namespace iotaudit::pcap
