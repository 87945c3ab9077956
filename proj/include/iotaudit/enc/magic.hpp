#pragma once

#include "iotaudit/core/bytes.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace iotaudit::enc {

enum class MagicKind { Compressed, Media };

/// A file signature: every part must match at its offset.
struct MagicEntry {
    struct Part {
        std::size_t offset;
        Bytes bytes;
    };
    std::string format;
    MagicKind kind = MagicKind::Compressed;
    std::vector<Part> parts;

    std::size_t length() const; // total signature bytes, used for longest-match
    bool matches(ByteView data) const;
};

class MagicTable {
public:
    MagicTable(std::string version, std::vector<MagicEntry> entries);

    /// The compiled-in table ("magic-v1").
    static const MagicTable& builtin();

    /// Longest matching signature, or nullptr.
    const MagicEntry* match(ByteView data) const;

    const std::string& version() const { return version_; }
    const std::vector<MagicEntry>& entries() const { return entries_; }

private:
    std::string version_;
    std::vector<MagicEntry> entries_;
};

} // namespace iotaudit::enc
