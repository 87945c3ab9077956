#include "iotaudit/mitm/ca.hpp"

#include "iotaudit/core/error.hpp"

#include <openssl/x509v3.h>

#include <fstream>
#include <sstream>

namespace iotaudit::mitm {

namespace fs = std::filesystem;

namespace {

constexpr std::int64_t kDay = 86400 * kMicrosPerSecond;

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_private(const fs::path& p, const std::string& text) {
    {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + p.string());
        out << text;
    }
    fs::permissions(p, fs::perms::owner_read | fs::perms::owner_write, fs::perm_options::replace);
}

tls::X509Ptr make_ca(EVP_PKEY* key) {
    tls::CertSpec spec;
    spec.common_name = "iotaudit interception CA";
    spec.organization = "iotaudit probe";
    const auto now = now_utc();
    spec.not_before = Timestamp{now.micros - kDay};
    spec.not_after = Timestamp{now.micros + 3650 * kDay};
    spec.is_ca = true;
    return tls::make_certificate(spec, key, nullptr, key);
}

} // namespace

LocalCa::LocalCa(LocalCa&& other) noexcept
    : cert_(std::move(other.cert_)), key_(std::move(other.key_)), leaf_key_(std::move(other.leaf_key_)),
      cache_(std::move(other.cache_)), next_serial_(other.next_serial_) {}

LocalCa LocalCa::generate() {
    LocalCa ca;
    ca.key_ = tls::generate_rsa_key(2048);
    ca.leaf_key_ = tls::generate_rsa_key(2048);
    ca.cert_ = make_ca(ca.key_.get());
    return ca;
}

LocalCa LocalCa::load_or_create(const fs::path& state_dir) {
    fs::create_directories(state_dir);
    const auto cert_path = state_dir / "ca.pem", key_path = state_dir / "ca.key", leaf_path = state_dir / "leaf.key";
    LocalCa ca;
    if (fs::exists(cert_path) && fs::exists(key_path)) {
        ca.cert_ = tls::parse_pem(read_file(cert_path));
        ca.key_ = tls::parse_key_pem(read_file(key_path));
        if (X509_check_private_key(ca.cert_.get(), ca.key_.get()) != 1)
            throw ValidationError("ca.key does not match ca.pem in " + state_dir.string());
    } else {
        ca.key_ = tls::generate_rsa_key(2048);
        ca.cert_ = make_ca(ca.key_.get());
        write_private(key_path, tls::key_to_pem(ca.key_.get()));
        std::ofstream(cert_path) << tls::to_pem(ca.cert_.get());
    }
    if (fs::exists(leaf_path)) {
        ca.leaf_key_ = tls::parse_key_pem(read_file(leaf_path));
    } else {
        ca.leaf_key_ = tls::generate_rsa_key(2048);
        write_private(leaf_path, tls::key_to_pem(ca.leaf_key_.get()));
    }
    return ca;
}

ForgedChain LocalCa::forge(const std::string& host, X509* upstream_leaf) {
    const auto upstream_fp = tls::sha256_fingerprint(upstream_leaf);
    std::lock_guard lock(mu_);
    if (auto it = cache_.find({host, upstream_fp}); it != cache_.end()) return it->second;

    tls::X509Ptr leaf(X509_new());
    X509_set_version(leaf.get(), 2);
    ASN1_INTEGER_set(X509_get_serialNumber(leaf.get()), next_serial_++);
    const auto now = now_utc();
    ASN1_TIME_set(X509_getm_notBefore(leaf.get()), static_cast<time_t>(now.micros / kMicrosPerSecond - 86400));
    ASN1_TIME_set(X509_getm_notAfter(leaf.get()), static_cast<time_t>(now.micros / kMicrosPerSecond + 397 * 86400));
    X509_set_subject_name(leaf.get(), X509_get_subject_name(upstream_leaf));
    X509_set_issuer_name(leaf.get(), X509_get_subject_name(cert_.get()));
    X509_set_pubkey(leaf.get(), leaf_key_.get());
    const int san = X509_get_ext_by_NID(upstream_leaf, NID_subject_alt_name, -1);
    if (san >= 0) X509_add_ext(leaf.get(), X509_get_ext(upstream_leaf, san), -1);
    if (X509_sign(leaf.get(), key_.get(), EVP_sha256()) <= 0) throw Error("forging leaf: " + tls::openssl_errors());

    ForgedChain chain{std::shared_ptr<X509>(leaf.release(), X509_free), {}};
    chain.fingerprint = tls::sha256_fingerprint(chain.leaf.get());
    cache_.emplace(std::make_pair(host, upstream_fp), chain);
    return chain;
}

std::size_t LocalCa::forged_count() const {
    std::lock_guard lock(mu_);
    return cache_.size();
}

} // namespace iotaudit::mitm
