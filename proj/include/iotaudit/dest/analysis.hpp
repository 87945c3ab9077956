#pragma once

#include "iotaudit/core/json.hpp"
#include "iotaudit/core/phase.hpp"
#include "iotaudit/dest/geo.hpp"
#include "iotaudit/dest/party.hpp"
#include "iotaudit/pcap/device.hpp"
#include "iotaudit/pcap/dns_map.hpp"
#include "iotaudit/pcap/flow.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace iotaudit::dest {

/// One device's phase-labelled flows.
struct DeviceTraffic {
    pcap::DeviceMetadata device;
    std::vector<pcap::FlowRecord> flows;
};

using DestinationKey = std::pair<std::string, IpAddress>; // (device_id, server ip)
using DestinationIndex = std::map<DestinationKey, DestinationRecord>;

/// Geolocates and attributes every global server address each device talked to.
/// Records come out sorted by (device_id, ip).
std::vector<DestinationRecord> resolve_destinations(const std::vector<DeviceTraffic>& corpus, const pcap::DnsMap& dns,
                                                    GeoProvider& geo, const PartyPolicyMap& policy);
DestinationIndex index_destinations(const std::vector<DestinationRecord>& records);

using pcap::ByteUnit;

using CountryShares = std::map<std::string, double>;

struct ProportionTable {
    std::map<std::string, CountryShares> per_device;
    std::map<std::string, CountryShares> categories; // mean of per-device shares
    std::map<std::string, std::size_t> category_devices;
    CountryShares overall;           // mean over every device with traffic
    CountryShares overall_raw_bytes; // bytes to T over all bytes, unweighted
    std::vector<std::string> warnings;

    Json to_json() const;
    /// Links category -> country weighted by share.
    Json sankey() const;
};

/// Core arithmetic: share_i(T) = M_i / N_i, category share = mean over its devices.
/// Devices with N_i = 0 are skipped with a warning.
ProportionTable proportion_table(const std::map<std::string, std::map<std::string, std::uint64_t>>& bytes,
                                 const std::map<std::string, std::string>& category_of);

/// Builds byte counts from flows to global destinations, optionally
/// restricted to one phase, and applies the arithmetic above.
ProportionTable proportion_table(const std::vector<DeviceTraffic>& corpus, const DestinationIndex& dests,
                                 ByteUnit unit = ByteUnit::Wire, std::optional<PhaseLabel> phase = std::nullopt);

/// Grouping used for table columns. Defaults to the device category.
using ColumnOf = std::function<std::string(const pcap::DeviceMetadata&)>;

/// Nine columns: eight named categories, the rest under "other devices".
std::string table2_column(const pcap::DeviceMetadata& d);

struct PartyCountTable {
    /// row ("SETUP", ..., "TOTAL") -> column -> party -> mean distinct servers
    std::map<std::string, std::map<std::string, std::map<Party, double>>> rows;
    std::map<std::string, std::size_t> column_devices;

    double at(const std::string& row, const std::string& column, Party p) const;
    Json to_json() const;
    std::string to_csv() const;
};

/// Distinct server IPs per device per phase and party, averaged over the
/// devices in each column. TOTAL counts distinct IPs across the whole lifecycle.
PartyCountTable server_party_counts(const std::vector<DeviceTraffic>& corpus, const DestinationIndex& dests,
                                    const ColumnOf& column = {});

struct OrgCount {
    std::string organization;
    std::size_t devices = 0;
};

/// Distinct devices per organization, descending, ties alphabetical. UNKNOWN is left out.
std::vector<OrgCount> organization_ranking(const std::vector<DestinationRecord>& records);

std::string destinations_csv(const std::vector<DestinationRecord>& records);
std::string org_ranking_csv(const std::vector<OrgCount>& ranking);

} // namespace iotaudit::dest
