#pragma once

#include "iotaudit/core/json.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace iotaudit::report {

struct DeviceDelta {
    std::string device_id;
    std::set<std::string> protocols_added, protocols_removed;
    std::optional<double> encrypted_pre, encrypted_post; // percent
    std::set<std::string> destinations_added, destinations_removed;

    std::optional<double> encrypted_delta() const;
    bool empty() const;
};

struct FirmwareDiff {
    std::vector<DeviceDelta> devices; // every common device, sorted
    std::vector<std::string> only_pre, only_post;
    std::optional<double> mean_encrypted_pre, mean_encrypted_post;
    std::vector<std::string> warnings; // metadata mismatches

    Json to_json() const;
    std::string to_csv() const;
};

/// Compares two bundle summaries (bundle.json). Disjoint device sets throw
/// ValidationError.
FirmwareDiff diff_firmware(const Json& pre, const Json& post);

} // namespace iotaudit::report
