#pragma once

// Independent reference computations used to freeze expected values.
// These deliberately avoid the library's own code paths.

#include "iotaudit/core/bytes.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace iotaudit::testing {

/// -sum p log2 p / 8 over the byte histogram, computed the long way.
inline double entropy_oracle(ByteView data) {
    if (data.empty()) return 0.0;
    std::map<int, long double> counts;
    for (auto b : data) counts[b] += 1;
    long double h = 0;
    for (const auto& [value, c] : counts) {
        const long double p = c / static_cast<long double>(data.size());
        h -= p * std::log2(p);
    }
    return static_cast<double>(h / 8.0L);
}

/// A synthetic packet as the flow-grouping oracle sees it.
struct OraclePacket {
    std::uint64_t id;
    std::string proto; // "tcp" / "udp"
    std::string src, dst; // "ip|port"
    double t;
};

/// Groups packets by canonical (proto, endpoint pair), splitting UDP groups
/// when consecutive packets are more than `gap` seconds apart.
inline std::set<std::set<std::uint64_t>> flow_grouping_oracle(const std::vector<OraclePacket>& pkts, double gap = 120.0) {
    struct Open {
        double last;
        std::size_t group;
    };
    std::map<std::tuple<std::string, std::string, std::string>, Open> open;
    std::vector<std::set<std::uint64_t>> groups;
    for (const auto& p : pkts) {
        const auto a = std::min(p.src, p.dst);
        const auto b = std::max(p.src, p.dst);
        const auto key = std::make_tuple(p.proto, a, b);
        auto it = open.find(key);
        if (it == open.end() || (p.proto == "udp" && p.t - it->second.last > gap)) {
            groups.emplace_back();
            open[key] = {p.t, groups.size() - 1};
            it = open.find(key);
        }
        groups[it->second.group].insert(p.id);
        it->second.last = p.t;
    }
    return {groups.begin(), groups.end()};
}

/// One (device, category, country, bytes) observation, e.g. one flow.
struct ByteObservation {
    std::string device, category, country;
    std::uint64_t bytes;
};

/// Per-device ratio M_i/N_i averaged over a category's devices, the long way:
/// one pass per (category, country) over the raw observations.
inline std::map<std::string, std::map<std::string, double>> category_share_oracle(
    const std::vector<ByteObservation>& obs) {
    std::set<std::string> categories, countries;
    for (const auto& o : obs) {
        categories.insert(o.category);
        countries.insert(o.country);
    }
    std::map<std::string, std::map<std::string, double>> out;
    for (const auto& cat : categories) {
        std::set<std::string> devices;
        for (const auto& o : obs)
            if (o.category == cat) devices.insert(o.device);
        for (const auto& country : countries) {
            long double sum = 0;
            std::size_t n_devices = 0;
            for (const auto& d : devices) {
                long double m = 0, n = 0;
                for (const auto& o : obs) {
                    if (o.device != d) continue;
                    n += static_cast<long double>(o.bytes);
                    if (o.country == country) m += static_cast<long double>(o.bytes);
                }
                if (n == 0) continue;
                ++n_devices;
                sum += m / n;
            }
            if (n_devices && sum > 0) out[cat][country] = static_cast<double>(sum / n_devices);
        }
    }
    return out;
}

} // namespace iotaudit::testing
