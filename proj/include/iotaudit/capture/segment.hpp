#pragma once

#include "iotaudit/capture/timestamps.hpp"
#include "iotaudit/core/json.hpp"
#include "iotaudit/pcap/flow.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace iotaudit::capture {

struct SegmentOptions {
    std::filesystem::path out_dir;
    /// Added to every window before matching. For captures recorded on a
    /// host whose clock differs from the one that logged the timestamps.
    std::int64_t clock_offset_ms = 0;
    /// Also write one file per phase holding all of that phase's windows.
    bool merge_phases = false;
};

struct SegmentOutput {
    pcap::PhaseSegment segment;
    std::filesystem::path path;
    std::size_t packets = 0;
};

struct SegmentationResult {
    std::vector<SegmentOutput> segments;
    std::filesystem::path residue_path;
    std::size_t residue_packets = 0;
    std::size_t total_packets = 0;
    std::vector<std::filesystem::path> phase_files;
    std::vector<std::string> warnings; // empty windows, windows outside the capture span

    Json to_json() const;
};

/// Index of the (closed) window holding each timestamp, or -1. Windows must
/// be sorted and disjoint.
std::vector<int> assign_windows(const std::vector<Timestamp>& packet_times,
                                const std::vector<pcap::PhaseSegment>& windows);

/// Splits a raw capture into one file per timestamp entry plus a residue
/// file, all in the input's format. Writes `segments.json` alongside.
SegmentationResult segment_capture(const std::filesystem::path& raw_capture, const TimestampFile& timestamps,
                                   const SegmentOptions& options);

} // namespace iotaudit::capture
