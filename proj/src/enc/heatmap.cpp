#include "iotaudit/enc/heatmap.hpp"

#include <array>

namespace iotaudit::enc {

std::optional<HeatmapCell> Heatmap::at(const std::string& category, const std::string& row) const {
    auto c = cells.find(category);
    if (c == cells.end()) return std::nullopt;
    auto r = c->second.find(row);
    return r == c->second.end() ? std::nullopt : r->second;
}

Json Heatmap::to_json() const {
    Json j = Json::object();
    for (const auto& [cat, rows] : cells)
        for (const auto& [row, cell] : rows) {
            if (!cell) {
                j[cat][row] = nullptr;
                continue;
            }
            j[cat][row] = {{"encrypted", cell->encrypted},
                           {"unknown", cell->unknown},
                           {"unencrypted", cell->unencrypted},
                           {"devices", cell->devices}};
        }
    return j;
}

Heatmap encryption_heatmap(const std::vector<TrafficClassification>& classifications,
                           const std::map<std::string, std::string>& category_of, pcap::ByteUnit unit) {
    // device -> row -> {encrypted, unknown, unencrypted} bytes
    std::map<std::string, std::map<std::string, std::array<double, 3>>> bytes;
    for (const auto& c : classifications) {
        const std::size_t slot = c.verdict == Verdict::Encrypted ? 0 : c.verdict == Verdict::Unknown ? 1 : 2;
        const double b = static_cast<double>(c.bytes(unit));
        if (c.phase) bytes[c.device_id][std::string(to_string(*c.phase))][slot] += b;
        bytes[c.device_id]["FULL"][slot] += b;
    }

    Heatmap h;
    const std::array<std::string, 5> rows{"SETUP", "INTERACTION", "IDLE", "DELETION", "FULL"};
    std::map<std::string, std::map<std::string, HeatmapCell>> sums;
    for (const auto& [device, cat] : category_of) {
        for (const auto& row : rows) h.cells[cat][row]; // every known category gets a full row set
        auto d = bytes.find(device);
        if (d == bytes.end()) continue;
        for (const auto& [row, v] : d->second) {
            const double total = v[0] + v[1] + v[2];
            if (total <= 0) continue;
            auto& s = sums[cat][row];
            s.encrypted += 100.0 * v[0] / total;
            s.unknown += 100.0 * v[1] / total;
            s.unencrypted += 100.0 * v[2] / total;
            ++s.devices;
        }
    }
    for (auto& [cat, by_row] : sums)
        for (auto& [row, s] : by_row) {
            const double n = static_cast<double>(s.devices);
            h.cells[cat][row] = HeatmapCell{s.encrypted / n, s.unknown / n, s.unencrypted / n, s.devices};
        }
    return h;
}

} // namespace iotaudit::enc
