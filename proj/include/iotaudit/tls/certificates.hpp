#pragma once

#include "iotaudit/core/bytes.hpp"
#include "iotaudit/core/json.hpp"
#include "iotaudit/core/phase.hpp"
#include "iotaudit/core/time.hpp"
#include "iotaudit/pcap/flow.hpp"
#include "iotaudit/tls/x509.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <openssl/x509_vfy.h>

namespace iotaudit::tls {

enum class ChainPosition { Leaf, Intermediate, Root };
std::string_view to_string(ChainPosition p);

struct ServerEndpoint {
    std::string ip;
    std::uint16_t port = 0;
    std::string sni;

    std::string to_string() const; // ip:port[/sni]
};

struct PublicKeyInfo {
    std::string algorithm; // "RSA", "EC", "ED25519", ... or OpenSSL's short name
    int size_bits = 0;
};

struct CertificateRecord {
    Bytes der_bytes;
    std::string subject, issuer;
    std::string signature_algorithm; // OpenSSL long name, e.g. sha1WithRSAEncryption
    std::string signature_digest;    // lower-case, e.g. "sha1"; empty when none or unknown
    bool signature_recognized = true;
    PublicKeyInfo public_key;
    Timestamp not_before, not_after;
    ChainPosition chain_position = ChainPosition::Leaf;
    ServerEndpoint server_endpoint;
    std::string device_id;
    std::optional<PhaseLabel> phase;
    std::size_t chain_id = 0; // records from one Certificate message share this
    std::string fingerprint;  // SHA-256 of der_bytes

    bool self_issued() const { return subject == issuer; }
    Json to_json() const; // DER as base64
};

/// Parses DER into a record with endpoint fields left empty. Throws ParseError.
CertificateRecord parse_certificate(ByteView der);

/// Leaf first, then each issuer in turn; certificates that do not link stay
/// after the linked run in their original relative order.
std::vector<std::size_t> chain_order(const std::vector<CertificateRecord>& chain);

struct ExtractionWarning {
    std::string device_id;
    std::string endpoint;
    std::string message;
};

struct CertificateExtraction {
    std::vector<CertificateRecord> records;
    /// Devices with TLS <= 1.2 PSK sessions and no certificate anywhere in TLS <= 1.2.
    std::set<std::string> psk_model_devices;
    /// Devices that presented at least one certificate chain.
    std::set<std::string> certificate_model_devices;
    std::size_t cert_opaque_sessions = 0; // TLS 1.3
    std::map<std::string, std::size_t> cert_opaque_by_device;
    std::vector<ExtractionWarning> warnings;

    std::string to_jsonl() const;
};

CertificateExtraction extract_certificates(const std::vector<pcap::FlowRecord>& flows);

enum class FindingKind { WeakSignature, WeakKey, SelfSigned, ExcessiveValidity, UnrecognizedAlgorithm };
std::string_view to_string(FindingKind k);
std::optional<FindingKind> parse_finding_kind(std::string_view text);

struct CertificateFinding {
    std::string device_id;
    std::optional<PhaseLabel> phase;
    std::string endpoint;
    FindingKind finding = FindingKind::WeakSignature;
    std::string detail;
    std::string fingerprint;
    ChainPosition chain_position = ChainPosition::Leaf;
};

/// PEM roots; verification ignores certificate dates.
class TrustStore {
public:
    TrustStore();
    ~TrustStore();
    TrustStore(const TrustStore&) = delete;
    TrustStore& operator=(const TrustStore&) = delete;

    static TrustStore load(const std::filesystem::path& pem_bundle);
    /// data/trust/ca-bundle.pem
    static std::filesystem::path default_bundle();

    void add(X509* root);
    std::size_t size() const { return count_; }
    X509_STORE* native() const { return store_; }

    /// True when the chain builds from the leaf to one of the roots. Order of
    /// `chain` does not matter; `chain[leaf]` is the end-entity.
    bool anchors(const std::vector<X509Ptr>& chain, std::size_t leaf, std::string* error = nullptr) const;

    TrustStore(TrustStore&& other) noexcept;

private:
    X509_STORE* store_ = nullptr;
    std::size_t count_ = 0;
};

struct AuditPolicy {
    /// Lower-case digest names; matched against the signature algorithm's digest.
    std::set<std::string> weak_digests{"md2", "md4", "md5", "sha1"};
    int min_rsa_bits = 2048;
    int min_ec_bits = 224;
    std::int64_t max_validity_days = 398;
    std::filesystem::path trust_bundle; // empty = default bundle

    static AuditPolicy from_json(const Json& j);
    static AuditPolicy load(const std::filesystem::path& path);
    Json to_json() const;
};

/// Findings for every chain in `certs` (grouped by chain_id). Key and
/// signature checks look at each certificate; signature strength is not
/// judged on roots, validity only on leaves; SELF_SIGNED once per chain,
/// attached to the leaf.
std::vector<CertificateFinding> audit_certificates(const std::vector<CertificateRecord>& certs,
                                                   const AuditPolicy& policy, const TrustStore& trust);

std::string findings_csv(const std::vector<CertificateFinding>& findings);

/// Device counts per finding kind, column and phase (Table-5 layout).
/// `column_of` maps a device id to its report column.
Json finding_table(const std::vector<CertificateFinding>& findings,
                   const std::function<std::string(const std::string&)>& column_of);

} // namespace iotaudit::tls
