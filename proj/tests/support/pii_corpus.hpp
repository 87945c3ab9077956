#pragma once

// Flows with planted catalog items in UTF-8, GBK and percent-encoded form.

#include "iotaudit/pcap/flow.hpp"

#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

namespace iotaudit::testing {

struct PlantedPii {
    std::size_t flow = 0;
    int direction = 0;
    std::size_t offset = 0;
    std::size_t length = 0;
    std::string label;
    std::string encoding; // UTF-8, GBK, URL-escaped
    std::string value;    // UTF-8 plaintext

    auto tie() const { return std::tie(flow, direction, offset, length, label, encoding); }
    friend bool operator<(const PlantedPii& a, const PlantedPii& b) { return a.tie() < b.tie(); }
};

struct PiiCorpus {
    std::vector<pcap::FlowRecord> flows;
    std::vector<PlantedPii> planted;
};

/// `flows` TEXT flows; each direction carries 0-4 items with filler that
/// matches nothing in the default catalog.
PiiCorpus planted_pii_corpus(std::size_t flows, std::uint64_t seed);

/// UTF-8 -> GBK through iconv.
std::string to_gbk(const std::string& utf8);

} // namespace iotaudit::testing
