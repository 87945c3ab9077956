#pragma once

#include "iotaudit/tls/x509.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>

namespace iotaudit::mitm {

struct ForgedChain {
    std::shared_ptr<X509> leaf; // the only certificate presented to the device
    std::string fingerprint;
};

/// Interception CA plus a cache of forged leaves keyed by
/// (host, upstream leaf fingerprint).
class LocalCa {
public:
    /// Reads ca.pem / ca.key / leaf.key from `state_dir`, generating any that
    /// are missing.
    static LocalCa load_or_create(const std::filesystem::path& state_dir);
    /// Fresh in-memory CA.
    static LocalCa generate();

    X509* certificate() const { return cert_.get(); }
    EVP_PKEY* leaf_key() const { return leaf_key_.get(); }

    /// Clones subject and subjectAltName of `upstream_leaf`, signs with the CA.
    ForgedChain forge(const std::string& host, X509* upstream_leaf);
    std::size_t forged_count() const;

    LocalCa(LocalCa&& other) noexcept;

private:
    LocalCa() = default;

    tls::X509Ptr cert_;
    tls::PKeyPtr key_, leaf_key_;
    mutable std::mutex mu_;
    std::map<std::pair<std::string, std::string>, ForgedChain> cache_;
    long next_serial_ = 1000;
};

} // namespace iotaudit::mitm
