#pragma once

// Thin RAII layer over OpenSSL's X.509 and key APIs.

#include "iotaudit/core/bytes.hpp"
#include "iotaudit/core/time.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <openssl/evp.h>
#include <openssl/x509.h>

namespace iotaudit::tls {

struct X509Deleter {
    void operator()(X509* p) const { X509_free(p); }
};
struct PKeyDeleter {
    void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
using X509Ptr = std::unique_ptr<X509, X509Deleter>;
using PKeyPtr = std::unique_ptr<EVP_PKEY, PKeyDeleter>;

/// Most recent OpenSSL error queue entries, joined; clears the queue.
std::string openssl_errors();

PKeyPtr generate_rsa_key(int bits);
/// Curve by OpenSSL short name, e.g. "prime256v1", "secp384r1", "prime192v1".
PKeyPtr generate_ec_key(const std::string& curve);

struct CertSpec {
    std::string common_name;
    std::string organization;
    std::vector<std::string> dns_names; // subjectAltName
    Timestamp not_before, not_after;
    std::string digest = "SHA256"; // signing digest name understood by EVP_get_digestbyname
    bool is_ca = false;
    long serial = 1;
};

/// Signs with `issuer_key`; the issuer name comes from `issuer` or, when
/// null, the certificate is self-signed.
X509Ptr make_certificate(const CertSpec& spec, EVP_PKEY* subject_key, X509* issuer, EVP_PKEY* issuer_key);

X509Ptr parse_der(ByteView der);
Bytes to_der(X509* cert);
std::string to_pem(X509* cert);
std::string key_to_pem(EVP_PKEY* key);
X509Ptr parse_pem(const std::string& pem);
PKeyPtr parse_key_pem(const std::string& pem);
std::vector<X509Ptr> load_pem_bundle(const std::filesystem::path& path);

std::string name_oneline(const X509_NAME* name);
std::string sha256_fingerprint(X509* cert); // lower-case hex
Timestamp asn1_time_to_timestamp(const ASN1_TIME* t);
std::vector<std::string> subject_alt_dns(X509* cert);

} // namespace iotaudit::tls
