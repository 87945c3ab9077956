#include "iotaudit/capture/segment.hpp"

#include "iotaudit/core/error.hpp"
#include "iotaudit/pcap/capture_file.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

namespace iotaudit::capture {

namespace {

std::string safe_name(const std::string& s) {
    std::string out;
    for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    return out.empty() ? "op" : out;
}

} // namespace

std::vector<int> assign_windows(const std::vector<Timestamp>& times, const std::vector<pcap::PhaseSegment>& windows) {
    std::vector<int> out(times.size(), -1);
    for (std::size_t i = 0; i < times.size(); ++i) {
        // last window whose start <= t
        auto it = std::upper_bound(windows.begin(), windows.end(), times[i],
                                   [](Timestamp t, const pcap::PhaseSegment& w) { return t < w.start; });
        if (it == windows.begin()) continue;
        --it;
        if (times[i] <= it->end) out[i] = static_cast<int>(it - windows.begin());
    }
    return out;
}

Json SegmentationResult::to_json() const {
    Json segs = Json::array();
    for (const auto& s : segments)
        segs.push_back({{"device_id", s.segment.device_id},
                        {"operation", s.segment.operation},
                        {"phase", std::string(to_string(s.segment.phase))},
                        {"start", format_iso8601_ms(s.segment.start)},
                        {"end", format_iso8601_ms(s.segment.end)},
                        {"path", s.path.filename().string()},
                        {"packets", s.packets}});
    Json phases = Json::array();
    for (const auto& p : phase_files) phases.push_back(p.filename().string());
    return {{"segments", segs},
            {"residue", {{"path", residue_path.filename().string()}, {"packets", residue_packets}}},
            {"total_packets", total_packets},
            {"phase_files", phases},
            {"warnings", warnings}};
}

SegmentationResult segment_capture(const std::filesystem::path& raw_capture, const TimestampFile& timestamps,
                                   const SegmentOptions& options) {
    timestamps.validate();
    auto file = pcap::CaptureFile::open(raw_capture);
    const auto& records = file.records();

    auto windows = timestamps.segments();
    const std::int64_t shift = options.clock_offset_ms * 1000;
    for (auto& w : windows) {
        w.start.micros += shift;
        w.end.micros += shift;
    }

    std::vector<Timestamp> times;
    times.reserve(records.size());
    for (const auto& r : records) times.push_back(r.timestamp);
    const auto assignment = assign_windows(times, windows);

    SegmentationResult result;
    result.total_packets = records.size();
    for (const auto& w : file.warnings()) result.warnings.push_back(raw_capture.filename().string() + ": " + w);

    std::filesystem::create_directories(options.out_dir);
    const std::string ext = file.format() == pcap::CaptureFormat::PcapNg ? ".pcapng" : ".pcap";

    Timestamp first{}, last{};
    if (!records.empty()) {
        first = last = records.front().timestamp;
        for (const auto& r : records) {
            first = std::min(first, r.timestamp);
            last = std::max(last, r.timestamp);
        }
    }

    std::vector<std::size_t> counts(windows.size(), 0);
    for (int a : assignment)
        if (a >= 0) ++counts[static_cast<std::size_t>(a)];

    for (std::size_t wi = 0; wi < windows.size(); ++wi) {
        const auto& w = windows[wi];
        std::vector<bool> keep(records.size());
        for (std::size_t i = 0; i < records.size(); ++i) keep[i] = assignment[i] == static_cast<int>(wi);
        char prefix[32];
        std::snprintf(prefix, sizeof prefix, "%02zu_", wi + 1);
        auto path = options.out_dir / (std::string(prefix) + std::string(to_string(w.phase)) + "_" +
                                       safe_name(w.operation) + ext);
        pcap::write_file(path, file.write_subset(keep));
        result.segments.push_back({w, path, counts[wi]});

        if (records.empty() || w.end < first || w.start > last)
            result.warnings.push_back("window '" + w.operation + "' [" + format_iso8601_ms(w.start) + ", " +
                                      format_iso8601_ms(w.end) + "] lies outside the capture span");
        else if (counts[wi] == 0)
            result.warnings.push_back("window '" + w.operation + "' holds no packets");
    }

    std::vector<bool> residue(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        residue[i] = assignment[i] < 0;
        if (residue[i]) ++result.residue_packets;
    }
    result.residue_path = options.out_dir / ("residue" + ext);
    pcap::write_file(result.residue_path, file.write_subset(residue));

    if (options.merge_phases) {
        for (auto phase : kAllPhases) {
            std::vector<bool> keep(records.size());
            bool any_window = false;
            for (std::size_t i = 0; i < records.size(); ++i)
                keep[i] = assignment[i] >= 0 && windows[static_cast<std::size_t>(assignment[i])].phase == phase;
            for (const auto& w : windows) any_window |= w.phase == phase;
            if (!any_window) continue;
            auto path = options.out_dir / ("phase_" + std::string(to_string(phase)) + ext);
            pcap::write_file(path, file.write_subset(keep));
            result.phase_files.push_back(path);
        }
    }

    std::ofstream(options.out_dir / "segments.json") << result.to_json().dump(2) << "\n";
    return result;
}

} // namespace iotaudit::capture
