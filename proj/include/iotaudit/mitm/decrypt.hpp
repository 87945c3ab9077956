#pragma once

#include "iotaudit/core/json.hpp"
#include "iotaudit/mitm/session.hpp"

#include <string>
#include <vector>

namespace iotaudit::mitm {

struct ApiField {
    std::string name;
    std::string value; // "<redacted>" unless values are revealed
    std::string location; // query, json, form
    bool sensitive = false;
};

struct ApiExchange {
    std::string device_id;
    std::string endpoint;
    bool http = true;
    std::string method;
    std::string path; // without the query string
    std::vector<std::string> header_names;
    std::vector<ApiField> fields;
    // Non-HTTP plaintext only gets a size summary.
    std::uint64_t raw_bytes = 0;
    double printable_fraction = 0;

    Json to_json() const;
};

struct DecryptOptions {
    /// Case-insensitive substrings marking a field name as sensitive.
    std::vector<std::string> sensitive_patterns{"device_sk", "device_name", "secret", "token",
                                                "password",  "passwd",      "private_key"};
    bool reveal_values = false;
};

/// API calls the devices made inside accepted forged sessions. Sessions
/// without relayed application data are skipped.
std::vector<ApiExchange> decrypt_transcripts(const std::vector<ProbeSession>& sessions,
                                             const DecryptOptions& options = {});

} // namespace iotaudit::mitm
