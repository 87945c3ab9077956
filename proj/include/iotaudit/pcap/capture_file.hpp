#pragma once

#include "iotaudit/core/bytes.hpp"
#include "iotaudit/core/time.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace iotaudit::pcap {

enum class CaptureFormat { Pcap, PcapNg };

/// Link types we can strip down to the network layer.
namespace linktype {
inline constexpr std::uint32_t kNull = 0;
inline constexpr std::uint32_t kEthernet = 1;
inline constexpr std::uint32_t kRaw = 101;
inline constexpr std::uint32_t kLinuxSll = 113;
inline constexpr std::uint32_t kLinuxSll2 = 276;
} // namespace linktype

/// One packet record as stored in the file. `frame` and `raw` point into the
/// owning CaptureFile's buffer.
struct CaptureRecord {
    Timestamp timestamp;
    std::uint32_t link_type = 0;
    std::uint32_t original_length = 0;
    ByteView frame;
    ByteView raw; // the whole on-disk record (pcap header + data, or pcapng block)
};

/// An in-memory capture file. The format is detected from the magic bytes
/// (0xA1B2C3D4 / 0xA1B23C4D families for pcap, 0x0A0D0D0A for pcapng).
class CaptureFile {
public:
    /// Throws IoError when unreadable and ParseError when the magic or the
    /// file header is invalid. A truncated final record is dropped with a warning.
    static CaptureFile open(const std::filesystem::path& path);
    static CaptureFile from_bytes(Bytes data);

    CaptureFile(const CaptureFile&) = delete;
    CaptureFile& operator=(const CaptureFile&) = delete;
    CaptureFile(CaptureFile&&) noexcept = default;
    CaptureFile& operator=(CaptureFile&&) noexcept = default;

    CaptureFormat format() const { return format_; }
    const std::vector<CaptureRecord>& records() const { return records_; }
    const std::vector<std::string>& warnings() const { return warnings_; }
    bool truncated_tail() const { return truncated_tail_; }

    /// Serializes a file of the same format holding only the records whose
    /// index has `keep[i] == true`. For pcapng every non-packet block
    /// (section headers, interface descriptions, statistics) is retained in
    /// its original position so interface ids stay valid.
    Bytes write_subset(const std::vector<bool>& keep) const;

private:
    CaptureFile() = default;
    void parse_pcap();
    void parse_pcapng();

    struct Segment {
        bool is_packet;
        std::size_t offset;
        std::size_t length;
    };

    CaptureFormat format_ = CaptureFormat::Pcap;
    Bytes data_;
    std::vector<CaptureRecord> records_;
    std::vector<Segment> layout_; // file layout after the pcap global header (pcap) or from offset 0 (pcapng)
    std::vector<std::string> warnings_;
    bool truncated_tail_ = false;
};

/// Minimal classic-pcap writer (microsecond resolution, little endian).
class PcapWriter {
public:
    explicit PcapWriter(std::uint32_t link_type = linktype::kEthernet, std::uint32_t snaplen = 262144);

    void add(Timestamp ts, ByteView frame, std::uint32_t original_length = 0);
    const Bytes& bytes() const { return out_; }
    std::size_t count() const { return count_; }
    void save(const std::filesystem::path& path) const;

private:
    Bytes out_;
    std::size_t count_ = 0;
};

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, ByteView data);

} // namespace iotaudit::pcap
