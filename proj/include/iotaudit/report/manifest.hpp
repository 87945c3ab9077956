#pragma once

#include "iotaudit/core/json.hpp"
#include "iotaudit/core/phase.hpp"
#include "iotaudit/pcap/device.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace iotaudit::report {

enum class FirmwareTag { Pre, Post, None };
std::string_view to_string(FirmwareTag t); // "pre", "post", "none"
std::optional<FirmwareTag> parse_firmware_tag(std::string_view text);

struct CaptureEntry {
    std::string device_id;
    std::optional<PhaseLabel> phase; // absent = unsegmented capture
    std::string path;                // as written in the manifest
    std::filesystem::path resolved;  // relative to the manifest directory
    FirmwareTag firmware = FirmwareTag::None;
};

struct CorpusManifest {
    std::vector<pcap::DeviceMetadata> devices;
    std::vector<CaptureEntry> captures;

    /// `{"devices": [...] | "devices_file": "...", "captures": [{"device_id", "phase"?, "path",
    /// "firmware_tag"?}]}`. Checks device references, (device, phase, firmware_tag) uniqueness
    /// and that every path exists; throws ValidationError naming the offending entry.
    static CorpusManifest from_json(const Json& j, const std::filesystem::path& base_dir);
    static CorpusManifest load(const std::filesystem::path& path);
    Json to_json() const;

    const pcap::DeviceMetadata* device(const std::string& id) const;
};

} // namespace iotaudit::report
