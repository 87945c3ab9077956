#include "iotaudit/pcap/capture_file.hpp"

#include "iotaudit/core/error.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <map>

namespace iotaudit::pcap {

namespace {

constexpr std::uint32_t kPcapMagicUs = 0xA1B2C3D4;
constexpr std::uint32_t kPcapMagicNs = 0xA1B23C4D;
constexpr std::uint32_t kPcapngShb = 0x0A0D0D0A;
constexpr std::uint32_t kPcapngByteOrder = 0x1A2B3C4D;
constexpr std::uint32_t kBlockIdb = 1;
constexpr std::uint32_t kBlockOpb = 2;
constexpr std::uint32_t kBlockSpb = 3;
constexpr std::uint32_t kBlockEpb = 6;

constexpr std::uint32_t kMaxRecord = 16 * 1024 * 1024;

std::uint32_t swap32(std::uint32_t v) {
    return (v >> 24) | ((v >> 8) & 0xFF00) | ((v << 8) & 0xFF0000) | (v << 24);
}

struct Reader {
    bool big_endian = false;
    std::uint16_t u16(const std::uint8_t* p) const { return big_endian ? load_be16(p) : load_le16(p); }
    std::uint32_t u32(const std::uint8_t* p) const { return big_endian ? load_be32(p) : load_le32(p); }
};

} // namespace

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, ByteView data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("short write to '" + path.string() + "'");
}

CaptureFile CaptureFile::open(const std::filesystem::path& path) {
    try {
        return from_bytes(read_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

CaptureFile CaptureFile::from_bytes(Bytes data) {
    CaptureFile f;
    f.data_ = std::move(data);
    if (f.data_.size() < 4) throw ParseError("file too short for a capture header");
    const std::uint32_t le = load_le32(f.data_.data());
    const std::uint32_t be = load_be32(f.data_.data());
    if (le == kPcapngShb) {
        f.format_ = CaptureFormat::PcapNg;
        f.parse_pcapng();
    } else if (le == kPcapMagicUs || le == kPcapMagicNs || be == kPcapMagicUs || be == kPcapMagicNs) {
        f.format_ = CaptureFormat::Pcap;
        f.parse_pcap();
    } else {
        throw ParseError("unrecognized capture magic 0x" + to_hex(ByteView(f.data_).first(4)));
    }
    return f;
}

void CaptureFile::parse_pcap() {
    if (data_.size() < 24) throw ParseError("truncated pcap global header");
    Reader r;
    const std::uint32_t magic_le = load_le32(data_.data());
    r.big_endian = !(magic_le == kPcapMagicUs || magic_le == kPcapMagicNs);
    const std::uint32_t magic = r.u32(data_.data());
    const bool nanos = magic == kPcapMagicNs;
    const std::uint32_t link = r.u32(data_.data() + 20) & 0x0FFFFFFF; // upper bits carry FCS info

    std::size_t off = 24;
    while (off < data_.size()) {
        if (data_.size() - off < 16) {
            truncated_tail_ = true;
            warnings_.push_back("truncated record header at offset " + std::to_string(off));
            break;
        }
        const std::uint8_t* h = data_.data() + off;
        const std::uint32_t sec = r.u32(h);
        const std::uint32_t frac = r.u32(h + 4);
        const std::uint32_t incl = r.u32(h + 8);
        const std::uint32_t orig = r.u32(h + 12);
        if (incl > kMaxRecord) {
            truncated_tail_ = true;
            warnings_.push_back("implausible record length " + std::to_string(incl) + " at offset " +
                                std::to_string(off) + "; stopping");
            break;
        }
        if (data_.size() - off - 16 < incl) {
            truncated_tail_ = true;
            warnings_.push_back("truncated final record at offset " + std::to_string(off));
            break;
        }
        CaptureRecord rec;
        rec.timestamp.micros = std::int64_t{sec} * kMicrosPerSecond + (nanos ? frac / 1000 : frac);
        rec.link_type = link;
        rec.original_length = orig < incl ? incl : orig;
        rec.frame = ByteView(data_.data() + off + 16, incl);
        rec.raw = ByteView(data_.data() + off, 16 + incl);
        records_.push_back(rec);
        layout_.push_back({true, off, 16 + std::size_t{incl}});
        off += 16 + incl;
    }
}

void CaptureFile::parse_pcapng() {
    Reader r;
    struct Interface {
        std::uint32_t link;
        std::int64_t units_per_sec;
    };
    std::vector<Interface> ifaces;
    bool have_section = false;

    std::size_t off = 0;
    while (off < data_.size()) {
        if (data_.size() - off < 12) {
            truncated_tail_ = true;
            warnings_.push_back("truncated block header at offset " + std::to_string(off));
            break;
        }
        const std::uint8_t* b = data_.data() + off;
        const std::uint32_t type_le = load_le32(b);
        if (type_le == kPcapngShb) {
            const std::uint32_t bom = load_le32(b + 8);
            if (bom == kPcapngByteOrder)
                r.big_endian = false;
            else if (bom == swap32(kPcapngByteOrder))
                r.big_endian = true;
            else
                throw ParseError("bad pcapng byte-order magic");
            ifaces.clear();
            have_section = true;
        } else if (!have_section) {
            throw ParseError("pcapng block before section header");
        }
        const std::uint32_t type = r.u32(b);
        const std::uint32_t len = r.u32(b + 4);
        if (len < 12 || len % 4 != 0 || len > kMaxRecord) {
            if (off == 0) throw ParseError("corrupt pcapng section header");
            truncated_tail_ = true;
            warnings_.push_back("corrupt block length at offset " + std::to_string(off) + "; stopping");
            break;
        }
        if (data_.size() - off < len) {
            if (off == 0) throw ParseError("truncated pcapng section header");
            truncated_tail_ = true;
            warnings_.push_back("truncated final block at offset " + std::to_string(off));
            break;
        }
        const std::uint8_t* body = b + 8;
        const std::size_t body_len = len - 12;
        bool is_packet = false;

        if (type == kBlockIdb && body_len >= 8) {
            Interface iface{r.u16(body), 1'000'000};
            std::size_t o = 8;
            while (o + 4 <= body_len) {
                const std::uint16_t code = r.u16(body + o);
                const std::uint16_t olen = r.u16(body + o + 2);
                if (code == 0) break;
                if (code == 9 && olen >= 1 && o + 4 < body_len) {
                    const std::uint8_t res = body[o + 4];
                    std::int64_t units = 1;
                    if (res & 0x80) {
                        for (int i = 0; i < (res & 0x7F) && units < (std::int64_t{1} << 40); ++i) units *= 2;
                    } else {
                        for (int i = 0; i < res && units < 1'000'000'000'000LL; ++i) units *= 10;
                    }
                    iface.units_per_sec = units;
                }
                o += 4 + ((olen + 3u) & ~3u);
            }
            ifaces.push_back(iface);
        } else if ((type == kBlockEpb || type == kBlockOpb) && body_len >= 20) {
            const std::uint32_t if_id = type == kBlockEpb ? r.u32(body) : r.u16(body);
            const std::uint64_t ts = (std::uint64_t{r.u32(body + 4)} << 32) | r.u32(body + 8);
            const std::uint32_t caplen = r.u32(body + 12);
            const std::uint32_t origlen = r.u32(body + 16);
            if (if_id >= ifaces.size()) throw ParseError("packet block references undefined interface " + std::to_string(if_id));
            if (caplen > body_len - 20) {
                truncated_tail_ = true;
                warnings_.push_back("packet block with inconsistent length at offset " + std::to_string(off));
                break;
            }
            const auto& iface = ifaces[if_id];
            CaptureRecord rec;
            const auto units = static_cast<std::uint64_t>(iface.units_per_sec);
            rec.timestamp.micros = static_cast<std::int64_t>((ts / units) * 1'000'000 + (ts % units) * 1'000'000 / units);
            rec.link_type = iface.link;
            rec.original_length = origlen < caplen ? caplen : origlen;
            rec.frame = ByteView(body + 20, caplen);
            rec.raw = ByteView(b, len);
            records_.push_back(rec);
            is_packet = true;
        } else if (type == kBlockSpb && body_len >= 4) {
            if (ifaces.empty()) throw ParseError("simple packet block without interface");
            const std::uint32_t origlen = r.u32(body);
            const std::uint32_t caplen = std::min<std::uint32_t>(origlen, static_cast<std::uint32_t>(body_len - 4));
            CaptureRecord rec;
            rec.link_type = ifaces[0].link;
            rec.original_length = origlen;
            rec.frame = ByteView(body + 4, caplen);
            rec.raw = ByteView(b, len);
            records_.push_back(rec);
            is_packet = true;
        }
        layout_.push_back({is_packet, off, len});
        off += len;
    }
}

Bytes CaptureFile::write_subset(const std::vector<bool>& keep) const {
    Bytes out;
    if (format_ == CaptureFormat::Pcap) out.insert(out.end(), data_.begin(), data_.begin() + 24);
    std::size_t packet_index = 0;
    for (const auto& seg : layout_) {
        bool emit = true;
        if (seg.is_packet) {
            emit = packet_index < keep.size() && keep[packet_index];
            ++packet_index;
        }
        if (emit) out.insert(out.end(), data_.begin() + static_cast<std::ptrdiff_t>(seg.offset),
                             data_.begin() + static_cast<std::ptrdiff_t>(seg.offset + seg.length));
    }
    return out;
}

PcapWriter::PcapWriter(std::uint32_t link_type, std::uint32_t snaplen) {
    append_le32(out_, kPcapMagicUs);
    append_le16(out_, 2);
    append_le16(out_, 4);
    append_le32(out_, 0);
    append_le32(out_, 0);
    append_le32(out_, snaplen);
    append_le32(out_, link_type);
}

void PcapWriter::add(Timestamp ts, ByteView frame, std::uint32_t original_length) {
    std::int64_t sec = ts.micros / kMicrosPerSecond;
    std::int64_t us = ts.micros % kMicrosPerSecond;
    if (us < 0) {
        us += kMicrosPerSecond;
        --sec;
    }
    append_le32(out_, static_cast<std::uint32_t>(sec));
    append_le32(out_, static_cast<std::uint32_t>(us));
    append_le32(out_, static_cast<std::uint32_t>(frame.size()));
    append_le32(out_, original_length ? original_length : static_cast<std::uint32_t>(frame.size()));
    append(out_, frame);
    ++count_;
}

void PcapWriter::save(const std::filesystem::path& path) const { write_file(path, out_); }

} // namespace iotaudit::pcap
