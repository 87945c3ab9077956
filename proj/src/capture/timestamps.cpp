#include "iotaudit/capture/timestamps.hpp"

#include "iotaudit/core/error.hpp"
#include "iotaudit/core/strings.hpp"

#include <fstream>
#include <sstream>

namespace iotaudit::capture {

void TimestampFile::validate() const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (e.end < e.start) throw ValidationError("timestamp entry '" + e.operation + "' ends before it starts");
        if (i > 0) {
            const auto& prev = entries[i - 1];
            if (e.start < prev.start) throw ValidationError("timestamp entries out of order at '" + e.operation + "'");
            if (e.start <= prev.end)
                throw ValidationError("timestamp entry '" + e.operation + "' overlaps '" + prev.operation + "'");
        }
    }
}

std::vector<pcap::PhaseSegment> TimestampFile::segments() const {
    std::vector<pcap::PhaseSegment> out;
    for (const auto& e : entries) out.push_back({device_id, e.operation, e.phase, e.start, e.end});
    return out;
}

std::string format_timestamps(const TimestampFile& file) {
    std::ostringstream out;
    out << "# iotaudit timestamps v1\n";
    out << "# device_id: " << file.device_id << "\n";
    out << "# status: " << (file.complete ? "complete" : "incomplete") << "\n";
    out << "# device_id\toperation\tphase\tstart\tend\n";
    for (const auto& e : file.entries)
        out << file.device_id << '\t' << e.operation << '\t' << to_string(e.phase) << '\t'
            << format_iso8601_ms(e.start) << '\t' << format_iso8601_ms(e.end) << '\n';
    return out.str();
}

TimestampFile parse_timestamps(std::string_view text) {
    TimestampFile file;
    bool have_device = false;
    std::size_t line_no = 0;
    for (auto line : split(text, '\n')) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        if (line[0] == '#') {
            auto body = trim(std::string_view(line).substr(1));
            if (starts_with_icase(body, "status:")) {
                auto v = ascii_lower(trim(body.substr(7)));
                if (v == "incomplete") file.complete = false;
                else if (v == "complete") file.complete = true;
                else throw ParseError("timestamp file line " + std::to_string(line_no) + ": bad status '" + v + "'");
            } else if (starts_with_icase(body, "device_id:")) {
                file.device_id = std::string(trim(body.substr(10)));
                have_device = true;
            }
            continue;
        }
        auto cols = split(line, '\t');
        if (cols.size() != 5)
            throw ParseError("timestamp file line " + std::to_string(line_no) + ": expected 5 tab-separated fields");
        if (!have_device) {
            file.device_id = cols[0];
            have_device = true;
        } else if (cols[0] != file.device_id) {
            throw ValidationError("timestamp file line " + std::to_string(line_no) + ": device id '" + cols[0] +
                                  "' differs from '" + file.device_id + "'");
        }
        TimestampEntry e;
        e.operation = cols[1];
        e.phase = require_phase(cols[2]);
        e.start = parse_iso8601(cols[3]);
        e.end = parse_iso8601(cols[4]);
        file.entries.push_back(std::move(e));
    }
    file.validate();
    return file;
}

void write_timestamps(const std::filesystem::path& path, const TimestampFile& file) {
    file.validate();
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << format_timestamps(file);
        out.flush();
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

TimestampFile read_timestamps(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open timestamp file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_timestamps(ss.str());
}

} // namespace iotaudit::capture
