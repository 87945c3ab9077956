#include "cert_factory.hpp"

#include "iotaudit/core/time.hpp"

#include <algorithm>
#include <random>

namespace iotaudit::testing {

using tls::CertSpec;
using tls::FindingKind;

namespace {

const Timestamp kIssued = parse_iso8601("2023-03-01T00:00:00Z");
constexpr std::int64_t kDay = 86400 * kMicrosPerSecond;

CertSpec ca_spec(const std::string& cn, long serial) {
    CertSpec s;
    s.common_name = cn;
    s.organization = "Test PKI";
    s.not_before = parse_iso8601("2015-01-01T00:00:00Z");
    s.not_after = parse_iso8601("2045-01-01T00:00:00Z");
    s.is_ca = true;
    s.serial = serial;
    return s;
}

} // namespace

CertFactory::CertFactory()
    : rsa1024_(tls::generate_rsa_key(1024)), rsa2048_(tls::generate_rsa_key(2048)),
      ec192_(tls::generate_ec_key("prime192v1")), ec256_(tls::generate_ec_key("prime256v1")),
      root_key_(tls::generate_rsa_key(2048)), rogue_key_(tls::generate_ec_key("prime256v1")) {
    trusted_root_ = tls::make_certificate(ca_spec("Test Trusted Root", 1), root_key_.get(), nullptr, root_key_.get());
    rogue_root_ = tls::make_certificate(ca_spec("Vendor Private Root", 2), rogue_key_.get(), nullptr, rogue_key_.get());
}

tls::TrustStore CertFactory::trust_store() const {
    tls::TrustStore t;
    t.add(trusted_root_.get());
    return t;
}

std::vector<PlantedChain> planted_chains(const CertFactory& f, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto chance = [&](double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; };
    std::vector<PlantedChain> out;

    for (std::size_t i = 0; i < n; ++i) {
        PlantedChain pc;
        const int anchor = static_cast<int>(rng() % 3); // 0 trusted, 1 rogue root, 2 self-signed leaf
        const bool weak_key = chance(0.3);
        const bool use_ec = chance(0.4);
        const bool weak_sig = chance(0.3);
        const bool long_validity = chance(0.3);
        const bool weak_intermediate = anchor != 2 && chance(0.15);
        const bool include_root = anchor != 2 && chance(0.5);

        EVP_PKEY* leaf_key = use_ec ? (weak_key ? f.ec192() : f.ec256()) : (weak_key ? f.rsa1024() : f.rsa2048());
        CertSpec leaf;
        leaf.common_name = "device-" + std::to_string(i) + ".iot.test";
        leaf.organization = "Planted";
        leaf.dns_names = {leaf.common_name};
        leaf.not_before = kIssued;
        leaf.not_after = Timestamp{kIssued.micros + (long_validity ? 825 : 365) * kDay};
        // MD5 has no ECDSA pairing.
        leaf.digest = weak_sig ? (use_ec || chance(0.5) ? "SHA1" : "MD5") : "SHA256";
        leaf.serial = static_cast<long>(1000 + i);

        std::vector<tls::X509Ptr> chain;
        if (anchor == 2) {
            chain.push_back(tls::make_certificate(leaf, leaf_key, nullptr, leaf_key));
            pc.description = "self-signed leaf";
        } else {
            X509* root = anchor == 0 ? f.trusted_root() : f.rogue_root();
            EVP_PKEY* root_key = anchor == 0 ? f.trusted_root_key() : f.rogue_root_key();
            EVP_PKEY* inter_key = weak_intermediate ? f.rsa1024() : f.rsa2048();
            auto inter_spec = ca_spec("Issuing CA " + std::to_string(i), static_cast<long>(5000 + i));
            auto inter = tls::make_certificate(inter_spec, inter_key, root, root_key);
            chain.push_back(tls::make_certificate(leaf, leaf_key, inter.get(), inter_key));
            chain.push_back(std::move(inter));
            if (include_root) chain.push_back(tls::X509Ptr(X509_dup(root)));
            pc.description = anchor == 0 ? "trusted chain" : "private-root chain";
        }

        if (weak_key) pc.expected.push_back(FindingKind::WeakKey);
        if (weak_intermediate) pc.expected.push_back(FindingKind::WeakKey);
        if (weak_sig) pc.expected.push_back(FindingKind::WeakSignature);
        if (long_validity) pc.expected.push_back(FindingKind::ExcessiveValidity);
        if (anchor != 0) pc.expected.push_back(FindingKind::SelfSigned);

        for (auto& c : chain) pc.der.push_back(tls::to_der(c.get()));
        std::shuffle(pc.der.begin(), pc.der.end(), rng);
        out.push_back(std::move(pc));
    }
    return out;
}

std::vector<tls::CertificateRecord> records_for(const std::vector<PlantedChain>& chains) {
    std::vector<tls::CertificateRecord> out;
    for (std::size_t i = 0; i < chains.size(); ++i)
        for (const auto& der : chains[i].der) {
            auto r = tls::parse_certificate(der);
            r.chain_id = i;
            r.device_id = "dev-" + std::to_string(i);
            r.server_endpoint = {"203.0.113.10", 443, "device-" + std::to_string(i) + ".iot.test"};
            out.push_back(std::move(r));
        }
    return out;
}

Bytes century_certificate(const CertFactory& f) {
    CertSpec s;
    s.common_name = "ipc.camera.local";
    s.organization = "Camera Vendor";
    s.not_before = parse_iso8601("2020-01-01T00:00:00Z");
    s.not_after = parse_iso8601("2120-01-01T00:00:00Z");
    auto cert = tls::make_certificate(s, f.rsa2048(), nullptr, f.rsa2048());
    return tls::to_der(cert.get());
}

} // namespace iotaudit::testing
