#include "iotaudit/tls/x509.hpp"

#include "iotaudit/core/error.hpp"

#include <openssl/bio.h>
#include <openssl/ec.h>
#include <openssl/err.h>
#include <openssl/pem.h>
#include <openssl/x509v3.h>

#include <ctime>
#include <fstream>
#include <sstream>

namespace iotaudit::tls {

namespace {

struct BioDeleter {
    void operator()(BIO* b) const { BIO_free(b); }
};
using BioPtr = std::unique_ptr<BIO, BioDeleter>;

std::string bio_string(BIO* b) {
    char* data = nullptr;
    const long n = BIO_get_mem_data(b, &data);
    return std::string(data, static_cast<std::size_t>(n));
}

void check(int ok, const char* what) {
    if (ok != 1) throw Error(std::string(what) + ": " + openssl_errors());
}

ASN1_TIME* set_time(ASN1_TIME* field, Timestamp t) {
    return ASN1_TIME_set(field, static_cast<time_t>(t.micros / kMicrosPerSecond));
}

void add_ext(X509* cert, X509* issuer, int nid, const std::string& value) {
    X509V3_CTX ctx;
    X509V3_set_ctx_nodb(&ctx);
    X509V3_set_ctx(&ctx, issuer ? issuer : cert, cert, nullptr, nullptr, 0);
    X509_EXTENSION* ext = X509V3_EXT_conf_nid(nullptr, &ctx, nid, value.c_str());
    if (!ext) throw Error("extension " + value + ": " + openssl_errors());
    X509_add_ext(cert, ext, -1);
    X509_EXTENSION_free(ext);
}

} // namespace

std::string openssl_errors() {
    std::string out;
    char buf[256];
    while (unsigned long e = ERR_get_error()) {
        ERR_error_string_n(e, buf, sizeof buf);
        if (!out.empty()) out += "; ";
        out += buf;
    }
    return out.empty() ? "unknown OpenSSL error" : out;
}

PKeyPtr generate_rsa_key(int bits) {
    PKeyPtr key(EVP_RSA_gen(static_cast<unsigned>(bits)));
    if (!key) throw Error("RSA key generation: " + openssl_errors());
    return key;
}

PKeyPtr generate_ec_key(const std::string& curve) {
    PKeyPtr key(EVP_EC_gen(curve.c_str()));
    if (!key) throw Error("EC key generation (" + curve + "): " + openssl_errors());
    return key;
}

X509Ptr make_certificate(const CertSpec& spec, EVP_PKEY* subject_key, X509* issuer, EVP_PKEY* issuer_key) {
    X509Ptr cert(X509_new());
    check(X509_set_version(cert.get(), 2), "X509_set_version");
    ASN1_INTEGER_set(X509_get_serialNumber(cert.get()), spec.serial);
    set_time(X509_getm_notBefore(cert.get()), spec.not_before);
    set_time(X509_getm_notAfter(cert.get()), spec.not_after);
    check(X509_set_pubkey(cert.get(), subject_key), "X509_set_pubkey");

    X509_NAME* name = X509_get_subject_name(cert.get());
    if (!spec.organization.empty())
        X509_NAME_add_entry_by_txt(name, "O", MBSTRING_UTF8,
                                   reinterpret_cast<const unsigned char*>(spec.organization.c_str()), -1, -1, 0);
    X509_NAME_add_entry_by_txt(name, "CN", MBSTRING_UTF8,
                               reinterpret_cast<const unsigned char*>(spec.common_name.c_str()), -1, -1, 0);
    check(X509_set_issuer_name(cert.get(), issuer ? X509_get_subject_name(issuer) : name), "X509_set_issuer_name");

    add_ext(cert.get(), issuer, NID_basic_constraints, spec.is_ca ? "critical,CA:TRUE" : "CA:FALSE");
    add_ext(cert.get(), issuer, NID_subject_key_identifier, "hash");
    if (spec.is_ca) add_ext(cert.get(), issuer, NID_key_usage, "critical,keyCertSign,cRLSign");
    if (!spec.dns_names.empty()) {
        std::string san;
        for (const auto& d : spec.dns_names) san += (san.empty() ? "DNS:" : ",DNS:") + d;
        add_ext(cert.get(), issuer, NID_subject_alt_name, san);
    }

    const EVP_MD* md = EVP_get_digestbyname(spec.digest.c_str());
    if (!md) throw Error("unknown digest " + spec.digest);
    if (X509_sign(cert.get(), issuer_key, md) <= 0) throw Error("X509_sign: " + openssl_errors());
    return cert;
}

X509Ptr parse_der(ByteView der) {
    const unsigned char* p = der.data();
    X509Ptr cert(d2i_X509(nullptr, &p, static_cast<long>(der.size())));
    if (!cert) {
        ERR_clear_error();
        throw ParseError("certificate DER does not parse");
    }
    return cert;
}

Bytes to_der(X509* cert) {
    unsigned char* buf = nullptr;
    const int n = i2d_X509(cert, &buf);
    if (n <= 0) throw Error("i2d_X509: " + openssl_errors());
    Bytes out(buf, buf + n);
    OPENSSL_free(buf);
    return out;
}

std::string to_pem(X509* cert) {
    BioPtr b(BIO_new(BIO_s_mem()));
    check(PEM_write_bio_X509(b.get(), cert), "PEM_write_bio_X509");
    return bio_string(b.get());
}

std::string key_to_pem(EVP_PKEY* key) {
    BioPtr b(BIO_new(BIO_s_mem()));
    check(PEM_write_bio_PrivateKey(b.get(), key, nullptr, nullptr, 0, nullptr, nullptr), "PEM_write_bio_PrivateKey");
    return bio_string(b.get());
}

X509Ptr parse_pem(const std::string& pem) {
    BioPtr b(BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size())));
    X509Ptr cert(PEM_read_bio_X509(b.get(), nullptr, nullptr, nullptr));
    if (!cert) throw ParseError("PEM certificate does not parse: " + openssl_errors());
    return cert;
}

PKeyPtr parse_key_pem(const std::string& pem) {
    BioPtr b(BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size())));
    PKeyPtr key(PEM_read_bio_PrivateKey(b.get(), nullptr, nullptr, nullptr));
    if (!key) throw ParseError("PEM private key does not parse: " + openssl_errors());
    return key;
}

std::vector<X509Ptr> load_pem_bundle(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open certificate bundle " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    const auto text = ss.str();
    BioPtr b(BIO_new_mem_buf(text.data(), static_cast<int>(text.size())));
    std::vector<X509Ptr> out;
    while (X509* c = PEM_read_bio_X509(b.get(), nullptr, nullptr, nullptr)) out.emplace_back(c);
    ERR_clear_error(); // end-of-file lands on the error queue
    return out;
}

std::string name_oneline(const X509_NAME* name) {
    BioPtr b(BIO_new(BIO_s_mem()));
    X509_NAME_print_ex(b.get(), name, 0, XN_FLAG_RFC2253);
    return bio_string(b.get());
}

std::string sha256_fingerprint(X509* cert) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int n = 0;
    X509_digest(cert, EVP_sha256(), md, &n);
    return to_hex(ByteView(md, n));
}

Timestamp asn1_time_to_timestamp(const ASN1_TIME* t) {
    std::tm tm{};
    if (ASN1_TIME_to_tm(t, &tm) != 1) throw ParseError("bad ASN.1 time");
    return Timestamp{static_cast<std::int64_t>(timegm(&tm)) * kMicrosPerSecond};
}

std::vector<std::string> subject_alt_dns(X509* cert) {
    std::vector<std::string> out;
    auto* names = static_cast<GENERAL_NAMES*>(X509_get_ext_d2i(cert, NID_subject_alt_name, nullptr, nullptr));
    if (!names) return out;
    for (int i = 0; i < sk_GENERAL_NAME_num(names); ++i) {
        const GENERAL_NAME* gn = sk_GENERAL_NAME_value(names, i);
        if (gn->type != GEN_DNS) continue;
        const auto* s = gn->d.dNSName;
        out.emplace_back(reinterpret_cast<const char*>(ASN1_STRING_get0_data(s)),
                         static_cast<std::size_t>(ASN1_STRING_length(s)));
    }
    GENERAL_NAMES_free(names);
    return out;
}

} // namespace iotaudit::tls
