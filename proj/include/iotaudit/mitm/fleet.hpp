#pragma once

// In-process fake devices and servers so the probe runs end to end on
// loopback without hardware or privileges.

#include "iotaudit/mitm/classify.hpp"
#include "iotaudit/mitm/probe.hpp"

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace iotaudit::mitm {

enum class DeviceBehavior {
    Strict,         // validates the chain: unknown_ca
    DecryptError,   // rejects with decrypt_error
    BadCertificate, // rejects with bad_certificate
    DecodeError,    // rejects with decode_error
    CloseNotify,    // completes the handshake, then closes politely
    Reconnect,      // drops mid-handshake and redials
    NoInternet,     // drops mid-handshake once and goes quiet
    ServerFail,     // accepts anything, but its server's chain is not trusted upstream
    Naive,          // accepts anything and talks
};

std::string_view to_string(DeviceBehavior b);
std::optional<DeviceBehavior> parse_device_behavior(std::string_view text);
MitmVerdict expected_verdict(DeviceBehavior b);

struct FleetServer {
    std::string host;
    DeviceBehavior behavior = DeviceBehavior::Naive;
    int attempts = 3; // Reconnect only
};

struct FleetDevice {
    std::string id;
    std::string ip; // a 127.0.0.0/8 address to bind
    std::vector<FleetServer> servers; // dialed in order
};

struct MarginalRow {
    MitmVerdict verdict = MitmVerdict::CommunicatesNormally;
    int devices = 0;
    int servers = 0;
};

struct FleetSpec {
    std::vector<FleetDevice> devices;

    /// Either `{"devices": [...]}` or `{"device_count": N, "marginals": [{verdict, devices, servers}]}`.
    static FleetSpec from_json(const Json& j);
    static FleetSpec load(const std::filesystem::path& path);
    Json to_json() const;

    RedirectRules rules() const;
    /// (device, "host:443") -> verdict the behaviour should produce.
    std::map<std::pair<std::string, std::string>, MitmVerdict> expected() const;
};

/// A fleet whose verdict table has exactly these device and server counts.
/// Rows take devices round-robin; a device's NO_INTERNET server is dialed last.
FleetSpec fleet_from_marginals(const std::vector<MarginalRow>& rows, std::size_t device_count);

struct ClientLog {
    std::string device_id;
    std::string host;
    int attempt = 0;
    bool handshake_ok = false;
    Bytes sent;     // plaintext written by the device
    Bytes received; // plaintext read back
    std::string note;
};

struct SimulationOptions {
    std::chrono::milliseconds redial_interval{50};
    std::chrono::milliseconds settle{300};
    ClassifyOptions classify;
    ProbeOptions probe; // listen address/port are overridden
};

struct SimulationResult {
    ProbeResult probe;
    std::vector<MitmObservation> observations;
    std::vector<ClientLog> clients;
    /// Plaintext the fake servers received, per (device ip, host), concatenated.
    std::map<std::pair<std::string, std::string>, Bytes> server_received;
    /// Root that signs the genuine server certificates.
    std::string public_root_pem;
    double seconds = 0;
};

SimulationResult run_simulated_fleet(const FleetSpec& fleet, LocalCa& ca, const SimulationOptions& options = {});

/// Requests a Naive device sends to each server.
std::vector<std::string> fleet_requests(const std::string& device_id, const std::string& host);

} // namespace iotaudit::mitm
