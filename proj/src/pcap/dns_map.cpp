#include "iotaudit/pcap/dns_map.hpp"

#include "iotaudit/pcap/dns.hpp"

#include <set>

namespace iotaudit::pcap {

void DnsMap::add(const IpAddress& ip, const std::string& domain, Timestamp seen) {
    auto& names = entries_[ip];
    auto [it, inserted] = names.emplace(domain, seen);
    if (!inserted && seen < it->second) it->second = seen;
}

void DnsMap::merge(const DnsMap& other) {
    for (const auto& [ip, names] : other.entries_)
        for (const auto& [name, seen] : names) add(ip, name, seen);
}

std::vector<DomainSighting> DnsMap::lookup(const IpAddress& ip) const {
    std::vector<DomainSighting> out;
    if (auto it = entries_.find(ip); it != entries_.end())
        for (const auto& [name, seen] : it->second) out.push_back({name, seen});
    return out;
}

std::vector<std::string> DnsMap::domains(const IpAddress& ip) const {
    std::vector<std::string> out;
    if (auto it = entries_.find(ip); it != entries_.end())
        for (const auto& [name, seen] : it->second) out.push_back(name);
    return out;
}

namespace {

void absorb(const dns::Message& msg, Timestamp seen, DnsMap& map) {
    // alias -> canonical target, walked from each question name
    std::map<std::string, std::string> cname;
    for (const auto& rr : msg.answers)
        if (rr.type == dns::rrtype::kCname) cname[rr.name] = rr.target;

    std::map<std::string, std::string> origin; // owner name -> asked name
    for (const auto& q : msg.questions) {
        std::string cur = q.name;
        std::set<std::string> visited;
        while (visited.insert(cur).second) {
            origin.emplace(cur, q.name);
            auto it = cname.find(cur);
            if (it == cname.end()) break;
            cur = it->second;
        }
    }
    for (const auto& rr : msg.answers) {
        if (!rr.address) continue;
        auto it = origin.find(rr.name);
        map.add(*rr.address, it != origin.end() ? it->second : rr.name, seen);
    }
}

} // namespace

DnsMapBuild build_dns_map(const std::vector<FlowRecord>& flows) {
    DnsMapBuild out;
    for (const auto& f : flows) {
        const bool port53 = f.key.low.port == 53 || f.key.high.port == 53;
        if (!port53) continue;
        if (f.key.transport == Transport::Udp) {
            for (const auto& p : f.packets) {
                if (p.payload.empty()) continue;
                auto msg = dns::parse_message(p.payload);
                if (!msg) {
                    ++out.malformed_skipped;
                    continue;
                }
                if (!msg->is_response) continue;
                ++out.responses_parsed;
                absorb(*msg, p.timestamp, out.map);
            }
        } else if (f.key.transport == Transport::Tcp) {
            for (const auto& stream : f.payload) {
                for (auto wire : dns::split_tcp_stream(stream)) {
                    auto msg = dns::parse_message(wire);
                    if (!msg) {
                        ++out.malformed_skipped;
                        continue;
                    }
                    if (!msg->is_response) continue;
                    ++out.responses_parsed;
                    absorb(*msg, f.first_seen, out.map);
                }
            }
        }
    }
    return out;
}

} // namespace iotaudit::pcap
