#pragma once

#include "iotaudit/core/ip.hpp"
#include "iotaudit/core/json.hpp"
#include "iotaudit/dest/geo.hpp"
#include "iotaudit/pcap/device.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace iotaudit::dest {

enum class Party { First, Support, Third, Unresolved };
std::string_view to_string(Party p);
std::optional<Party> parse_party(std::string_view text);

/// One contacted endpoint, seen from one device.
struct DestinationRecord {
    std::string device_id;
    IpAddress ip;
    std::vector<std::string> domains; // sorted
    std::string country = kUnknown;
    std::string organization = kUnknown;
    GeoSourceKind geo_source = GeoSourceKind::None;
    Party party = Party::Unresolved;
    std::string evidence;
};

/// A SUPPORT mapping taken from a manufacturer's privacy policy or
/// data-sharing document. Domain patterns match by label-aligned suffix,
/// organization patterns by exact (case-insensitive) name.
struct PolicyEntry {
    std::string pattern;
    bool is_domain = true;
    std::string source;                  // where the mapping was found
    std::vector<std::string> devices;    // empty = any device
    std::vector<std::string> brands;     // empty = any brand

    bool applies_to(const pcap::DeviceMetadata* device) const;
};

class PartyPolicyMap {
public:
    /// `{"entries": [{"pattern", "kind": "domain"|"organization", "source", "devices"?, "brands"?}]}`.
    /// Entries without a source note are rejected.
    static PartyPolicyMap from_json(const Json& j);
    static PartyPolicyMap load(const std::filesystem::path& path);

    void add(PolicyEntry e);
    const std::vector<PolicyEntry>& entries() const { return entries_; }

private:
    std::vector<PolicyEntry> entries_;
};

struct PartyAttribution {
    Party party = Party::Third;
    std::string evidence;
};

/// First-party patterns (manufacturer and companion-app vendor), then the
/// policy map, then THIRD. The evidence names whatever matched.
PartyAttribution classify_party(const DestinationRecord& dest, const pcap::DeviceMetadata* device,
                                const PartyPolicyMap& policy);

} // namespace iotaudit::dest
