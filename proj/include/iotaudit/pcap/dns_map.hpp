#pragma once

#include "iotaudit/core/ip.hpp"
#include "iotaudit/core/time.hpp"
#include "iotaudit/pcap/flow.hpp"

#include <map>
#include <string>
#include <vector>

namespace iotaudit::pcap {

struct DomainSighting {
    std::string domain;
    Timestamp first_seen;
};

/// Passive DNS: answer address -> names that resolved to it.
class DnsMap {
public:
    /// Records (ip -> domain); keeps the earliest sighting per pair.
    void add(const IpAddress& ip, const std::string& domain, Timestamp seen);
    void merge(const DnsMap& other);

    /// Empty for unmapped addresses; entries are sorted by domain.
    std::vector<DomainSighting> lookup(const IpAddress& ip) const;
    std::vector<std::string> domains(const IpAddress& ip) const;

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::map<IpAddress, std::map<std::string, Timestamp>>& entries() const { return entries_; }

private:
    std::map<IpAddress, std::map<std::string, Timestamp>> entries_;
};

struct DnsMapBuild {
    DnsMap map;
    std::size_t responses_parsed = 0;
    std::size_t malformed_skipped = 0;
};

/// Every A/AAAA answer contributes (address -> query name); CNAME chains are
/// followed back to the name originally asked for.
DnsMapBuild build_dns_map(const std::vector<FlowRecord>& flows);

} // namespace iotaudit::pcap
