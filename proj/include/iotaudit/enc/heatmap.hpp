#pragma once

#include "iotaudit/core/json.hpp"
#include "iotaudit/enc/classifier.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace iotaudit::enc {

/// Percentages (0-100) of a device group's traffic.
struct HeatmapCell {
    double encrypted = 0;
    double unknown = 0;
    double unencrypted = 0;
    std::size_t devices = 0; // devices with traffic in the cell
};

/// Rows "SETUP", "INTERACTION", "IDLE", "DELETION" and "FULL".
struct Heatmap {
    std::map<std::string, std::map<std::string, std::optional<HeatmapCell>>> cells; // category -> row -> cell

    std::optional<HeatmapCell> at(const std::string& category, const std::string& row) const;
    Json to_json() const;
};

/// Byte shares per device, then an equal-weight mean over the category's
/// devices. Cells without traffic stay empty.
Heatmap encryption_heatmap(const std::vector<TrafficClassification>& classifications,
                           const std::map<std::string, std::string>& category_of,
                           pcap::ByteUnit unit = pcap::ByteUnit::Wire);

} // namespace iotaudit::enc
