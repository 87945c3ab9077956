#pragma once

// Generated certificate chains with known defects. The manifest lists the
// findings each chain must produce.

#include "iotaudit/tls/certificates.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace iotaudit::testing {

/// Shared keys and a test root. Key generation dominates the cost, so keys
/// are reused across certificates.
class CertFactory {
public:
    CertFactory();

    /// Root that the test trust store knows about.
    X509* trusted_root() const { return trusted_root_.get(); }
    EVP_PKEY* trusted_root_key() const { return root_key_.get(); }
    /// A root absent from the trust store.
    X509* rogue_root() const { return rogue_root_.get(); }
    EVP_PKEY* rogue_root_key() const { return rogue_key_.get(); }

    tls::TrustStore trust_store() const;

    EVP_PKEY* rsa1024() const { return rsa1024_.get(); }
    EVP_PKEY* rsa2048() const { return rsa2048_.get(); }
    EVP_PKEY* ec192() const { return ec192_.get(); }
    EVP_PKEY* ec256() const { return ec256_.get(); }

private:
    tls::PKeyPtr rsa1024_, rsa2048_, ec192_, ec256_, root_key_, rogue_key_;
    tls::X509Ptr trusted_root_, rogue_root_;
};

struct PlantedChain {
    std::vector<Bytes> der; // shuffled
    std::vector<tls::FindingKind> expected;
    std::string description;
};

/// `n` chains with independent random defects, deterministic in `seed`.
std::vector<PlantedChain> planted_chains(const CertFactory& factory, std::size_t n, std::uint64_t seed);

/// Parsed records for `chains`, chain_id = index, device "dev-<index>".
std::vector<tls::CertificateRecord> records_for(const std::vector<PlantedChain>& chains);

/// Self-signed RSA-2048/SHA-256 certificate valid 2020-01-01 to 2120-01-01.
Bytes century_certificate(const CertFactory& factory);

} // namespace iotaudit::testing
