#pragma once

#include "iotaudit/core/phase.hpp"
#include "iotaudit/core/time.hpp"
#include "iotaudit/pcap/flow.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace iotaudit::capture {

struct TimestampEntry {
    std::string operation;
    PhaseLabel phase = PhaseLabel::Setup;
    Timestamp start, end;
};

/// Operation log for one device. Lines are
/// `device_id TAB operation TAB phase TAB start TAB end`, comment lines start with `#`.
struct TimestampFile {
    std::string device_id;
    std::vector<TimestampEntry> entries;
    bool complete = true;

    /// Throws ValidationError unless end >= start everywhere and entries are
    /// ordered by start without overlapping.
    void validate() const;

    std::vector<pcap::PhaseSegment> segments() const;
};

std::string format_timestamps(const TimestampFile& file);
/// Parses and revalidates. Throws ParseError / ValidationError.
TimestampFile parse_timestamps(std::string_view text);

/// Validates, then writes through a temporary file and rename.
void write_timestamps(const std::filesystem::path& path, const TimestampFile& file);
TimestampFile read_timestamps(const std::filesystem::path& path);

} // namespace iotaudit::capture
