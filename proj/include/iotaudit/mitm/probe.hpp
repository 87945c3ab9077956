#pragma once

#include "iotaudit/core/ip.hpp"
#include "iotaudit/core/json.hpp"
#include "iotaudit/mitm/ca.hpp"
#include "iotaudit/mitm/session.hpp"
#include "iotaudit/tls/certificates.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace iotaudit::mitm {

struct RedirectRule {
    std::string device_id;
    std::optional<IpAddress> ip;
    std::optional<MacAddress> mac;
    std::set<std::uint16_t> ports; // intercepted with TLS; others are relayed untouched
};

struct RedirectRules {
    std::vector<RedirectRule> rules;

    /// `{"rules": [{"device_id", "ip"?, "mac"?, "ports": [...]}]}`; each rule
    /// needs an ip or a mac and at least one port.
    static RedirectRules from_json(const Json& j);
    static RedirectRules load(const std::filesystem::path& path);
    Json to_json() const;

    const RedirectRule* match(const IpAddress& ip, const std::optional<MacAddress>& mac) const;
};

struct UpstreamTarget {
    std::string ip;
    std::uint16_t port = 0;
    std::uint16_t dialed_port = 0; // what the device asked for; 0 = same as port
};

/// Works out where an intercepted connection was headed.
class DestinationResolver {
public:
    virtual ~DestinationResolver() = default;
    virtual std::optional<UpstreamTarget> original_destination(int fd, const std::string& sni) = 0;
};

/// Reads SO_ORIGINAL_DST left by an iptables REDIRECT/DNAT rule.
class NetfilterResolver : public DestinationResolver {
public:
    std::optional<UpstreamTarget> original_destination(int fd, const std::string& sni) override;
};

/// Fixed host -> target map, for simulations.
class StaticResolver : public DestinationResolver {
public:
    /// Set dialed_port on the targets to report the port the device thinks it dialed.
    explicit StaticResolver(std::map<std::string, UpstreamTarget> hosts, std::optional<UpstreamTarget> fallback = {})
        : hosts_(std::move(hosts)), fallback_(std::move(fallback)) {}
    std::optional<UpstreamTarget> original_destination(int fd, const std::string& sni) override;

private:
    std::map<std::string, UpstreamTarget> hosts_;
    std::optional<UpstreamTarget> fallback_;
};

/// Looks the IP up in /proc/net/arp.
std::optional<MacAddress> arp_lookup(const IpAddress& ip);

struct ProbeOptions {
    std::string listen_address = "0.0.0.0";
    std::uint16_t listen_port = 8443; // 0 = ephemeral
    std::chrono::milliseconds io_timeout{10000};
    std::chrono::milliseconds idle_timeout{15000};
    std::size_t plaintext_cap = 64 * 1024;
    std::function<std::optional<MacAddress>(const IpAddress&)> mac_lookup = arp_lookup;
};

struct ProbeResult {
    std::vector<ProbeSession> sessions;
    std::string status; // OK or NO_TRAFFIC
    Timestamp start, end;
    std::vector<std::string> unmatched_sources;
};

class MitmProbe {
public:
    MitmProbe(ProbeOptions options, RedirectRules rules, std::shared_ptr<DestinationResolver> resolver, LocalCa& ca,
              const tls::TrustStore& upstream_trust);
    ~MitmProbe();
    MitmProbe(const MitmProbe&) = delete;
    MitmProbe& operator=(const MitmProbe&) = delete;

    /// Binds and starts accepting; returns the bound port.
    std::uint16_t start();
    /// Stops accepting, lets open sessions wind down, returns everything seen.
    ProbeResult stop();
    /// start(), wait `duration`, stop().
    ProbeResult run(std::chrono::milliseconds duration);

    std::size_t connections_seen() const { return connections_.load(); }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::atomic<std::size_t> connections_{0};
};

} // namespace iotaudit::mitm
