#include "iotaudit/report/manifest.hpp"

#include "iotaudit/core/error.hpp"
#include "iotaudit/core/strings.hpp"

#include <fstream>
#include <set>
#include <tuple>

namespace iotaudit::report {

std::string_view to_string(FirmwareTag t) {
    switch (t) {
    case FirmwareTag::Pre: return "pre";
    case FirmwareTag::Post: return "post";
    case FirmwareTag::None: return "none";
    }
    return "?";
}

std::optional<FirmwareTag> parse_firmware_tag(std::string_view text) {
    for (auto t : {FirmwareTag::Pre, FirmwareTag::Post, FirmwareTag::None})
        if (iequals(text, to_string(t))) return t;
    return std::nullopt;
}

CorpusManifest CorpusManifest::from_json(const Json& j, const std::filesystem::path& base_dir) {
    CorpusManifest m;
    try {
        if (j.contains("devices_file")) {
            m.devices = pcap::load_devices(base_dir / j.at("devices_file").get<std::string>());
        } else {
            m.devices = pcap::devices_from_json(j.at("devices"));
        }
        std::set<std::tuple<std::string, std::string, FirmwareTag>> seen;
        for (const auto& c : j.at("captures")) {
            CaptureEntry e;
            e.device_id = c.at("device_id").get<std::string>();
            e.path = c.at("path").get<std::string>();
            if (c.contains("phase") && !c.at("phase").is_null()) {
                const auto text = c.at("phase").get<std::string>();
                if (!iequals(text, "FULL")) {
                    e.phase = parse_phase(text);
                    if (!e.phase) throw ValidationError("capture " + e.path + ": unknown phase '" + text + "'");
                }
            }
            const auto tag = c.value("firmware_tag", std::string("none"));
            const auto ft = parse_firmware_tag(tag);
            if (!ft) throw ValidationError("capture " + e.path + ": firmware_tag must be pre, post or none");
            e.firmware = *ft;
            if (!m.device(e.device_id))
                throw ValidationError("capture " + e.path + " references unknown device '" + e.device_id + "'");
            e.resolved = std::filesystem::path(e.path).is_absolute() ? std::filesystem::path(e.path) : base_dir / e.path;
            if (!std::filesystem::is_regular_file(e.resolved))
                throw ValidationError("capture file not found: " + e.resolved.string());
            const std::string phase = e.phase ? std::string(to_string(*e.phase)) : "FULL";
            if (!seen.insert({e.device_id, phase, e.firmware}).second)
                throw ValidationError("duplicate capture for (" + e.device_id + ", " + phase + ", " +
                                      std::string(to_string(e.firmware)) + ")");
            m.captures.push_back(std::move(e));
        }
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("manifest: ") + e.what());
    }
    return m;
}

CorpusManifest CorpusManifest::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open manifest " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::exception& e) {
        throw ValidationError("manifest " + path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

Json CorpusManifest::to_json() const {
    Json devs = Json::array(), caps = Json::array();
    for (const auto& d : devices) devs.push_back(pcap::device_to_json(d));
    for (const auto& c : captures) {
        Json cj{{"device_id", c.device_id}, {"path", c.path}, {"firmware_tag", std::string(to_string(c.firmware))}};
        if (c.phase) cj["phase"] = std::string(to_string(*c.phase));
        caps.push_back(cj);
    }
    return Json{{"devices", devs}, {"captures", caps}};
}

const pcap::DeviceMetadata* CorpusManifest::device(const std::string& id) const {
    for (const auto& d : devices)
        if (d.device_id == id) return &d;
    return nullptr;
}

} // namespace iotaudit::report
