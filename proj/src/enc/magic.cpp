#include "iotaudit/enc/magic.hpp"

#include "iotaudit/core/error.hpp"

#include <algorithm>
#include <cstring>

namespace iotaudit::enc {

std::size_t MagicEntry::length() const {
    std::size_t n = 0;
    for (const auto& p : parts) n += p.bytes.size();
    return n;
}

bool MagicEntry::matches(ByteView data) const {
    for (const auto& p : parts) {
        if (data.size() < p.offset + p.bytes.size()) return false;
        if (std::memcmp(data.data() + p.offset, p.bytes.data(), p.bytes.size()) != 0) return false;
    }
    return !parts.empty();
}

MagicTable::MagicTable(std::string version, std::vector<MagicEntry> entries)
    : version_(std::move(version)), entries_(std::move(entries)) {
    for (const auto& e : entries_)
        if (e.length() == 0) throw ValidationError("magic entry '" + e.format + "' has an empty pattern");
}

const MagicEntry* MagicTable::match(ByteView data) const {
    const MagicEntry* best = nullptr;
    for (const auto& e : entries_)
        if (e.matches(data) && (!best || e.length() > best->length())) best = &e;
    return best;
}

namespace {

MagicEntry sig(std::string format, MagicKind kind, std::vector<MagicEntry::Part> parts) {
    return {std::move(format), kind, std::move(parts)};
}

Bytes b(std::initializer_list<std::uint8_t> v) { return Bytes(v); }
Bytes s(const char* text) { return Bytes(text, text + std::strlen(text)); }

} // namespace

const MagicTable& MagicTable::builtin() {
    using K = MagicKind;
    static const MagicTable table(
        "magic-v1",
        {
            sig("gzip", K::Compressed, {{0, b({0x1F, 0x8B})}}),
            sig("zlib", K::Compressed, {{0, b({0x78, 0x01})}}),
            sig("zlib", K::Compressed, {{0, b({0x78, 0x5E})}}),
            sig("zlib", K::Compressed, {{0, b({0x78, 0x9C})}}),
            sig("zlib", K::Compressed, {{0, b({0x78, 0xDA})}}),
            sig("zip", K::Compressed, {{0, b({0x50, 0x4B, 0x03, 0x04})}}),
            sig("bzip2", K::Compressed, {{0, s("BZh")}}),
            sig("xz", K::Compressed, {{0, b({0xFD, 0x37, 0x7A, 0x58, 0x5A, 0x00})}}),
            sig("7z", K::Compressed, {{0, b({0x37, 0x7A, 0xBC, 0xAF, 0x27, 0x1C})}}),
            sig("jpeg", K::Media, {{0, b({0xFF, 0xD8, 0xFF})}}),
            sig("png", K::Media, {{0, b({0x89, 0x50, 0x4E, 0x47, 0x0D, 0x0A, 0x1A, 0x0A})}}),
            sig("gif", K::Media, {{0, s("GIF8")}}),
            sig("mp4", K::Media, {{4, s("ftyp")}}),
            sig("riff", K::Media, {{0, s("RIFF")}}),
            sig("wav", K::Media, {{0, s("RIFF")}, {8, s("WAVE")}}),
            sig("avi", K::Media, {{0, s("RIFF")}, {8, s("AVI ")}}),
            sig("matroska", K::Media, {{0, b({0x1A, 0x45, 0xDF, 0xA3})}}),
            sig("mp3", K::Media, {{0, s("ID3")}}),
            sig("ogg", K::Media, {{0, s("OggS")}}),
            sig("flv", K::Media, {{0, s("FLV")}, {3, b({0x01})}}),
        });
    return table;
}

} // namespace iotaudit::enc
