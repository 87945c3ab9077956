#include "iotaudit/tls/certificates.hpp"

#include "iotaudit/core/error.hpp"
#include "iotaudit/core/strings.hpp"
#include "iotaudit/pcap/tls_records.hpp"

#include <openssl/err.h>
#include <openssl/objects.h>
#include <openssl/x509.h>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace iotaudit::tls {

namespace {

constexpr std::int64_t kSecondsPerDay = 86400;

std::string digest_name(int sig_nid, bool& recognized) {
    int md_nid = NID_undef, pk_nid = NID_undef;
    if (sig_nid == NID_undef || !OBJ_find_sigid_algs(sig_nid, &md_nid, &pk_nid)) {
        recognized = false;
        return {};
    }
    recognized = true;
    if (md_nid == NID_undef) return {}; // ed25519 and friends sign without a separate digest
    return ascii_lower(OBJ_nid2sn(md_nid));
}

PublicKeyInfo key_info(X509* cert) {
    PublicKeyInfo info;
    EVP_PKEY* key = X509_get0_pubkey(cert);
    if (!key) {
        ERR_clear_error();
        info.algorithm = "UNKNOWN";
        return info;
    }
    info.size_bits = EVP_PKEY_get_bits(key);
    switch (EVP_PKEY_get_base_id(key)) {
    case EVP_PKEY_RSA: info.algorithm = "RSA"; break;
    case EVP_PKEY_RSA_PSS: info.algorithm = "RSA-PSS"; break;
    case EVP_PKEY_EC: info.algorithm = "EC"; break;
    case EVP_PKEY_DSA: info.algorithm = "DSA"; break;
    case EVP_PKEY_ED25519: info.algorithm = "ED25519"; break;
    case EVP_PKEY_ED448: info.algorithm = "ED448"; break;
    default: info.algorithm = "UNKNOWN"; break;
    }
    return info;
}

std::string format_day(Timestamp t) { return format_iso8601_ms(t).substr(0, 10); }

std::string describe(const CertificateRecord& c) {
    return std::string(to_string(c.chain_position)) + " " + c.subject;
}

} // namespace

std::string_view to_string(ChainPosition p) {
    switch (p) {
    case ChainPosition::Leaf: return "leaf";
    case ChainPosition::Intermediate: return "intermediate";
    case ChainPosition::Root: return "root";
    }
    return "?";
}

std::string ServerEndpoint::to_string() const {
    std::string out = ip.find(':') != std::string::npos ? "[" + ip + "]" : ip;
    out += ":" + std::to_string(port);
    if (!sni.empty()) out += "/" + sni;
    return out;
}

Json CertificateRecord::to_json() const {
    Json j;
    j["device_id"] = device_id;
    j["phase"] = phase ? Json(std::string(iotaudit::to_string(*phase))) : Json(nullptr);
    j["endpoint"] = {{"ip", server_endpoint.ip}, {"port", server_endpoint.port}, {"sni", server_endpoint.sni}};
    j["chain_id"] = chain_id;
    j["chain_position"] = std::string(tls::to_string(chain_position));
    j["subject"] = subject;
    j["issuer"] = issuer;
    j["signature_algorithm"] = signature_algorithm;
    j["public_key"] = {{"algorithm", public_key.algorithm}, {"size_bits", public_key.size_bits}};
    j["not_before"] = format_iso8601_ms(not_before);
    j["not_after"] = format_iso8601_ms(not_after);
    j["sha256"] = fingerprint;
    j["der_base64"] = base64_encode(der_bytes);
    return j;
}

CertificateRecord parse_certificate(ByteView der) {
    auto cert = parse_der(der);
    CertificateRecord r;
    r.der_bytes.assign(der.begin(), der.end());
    r.subject = name_oneline(X509_get_subject_name(cert.get()));
    r.issuer = name_oneline(X509_get_issuer_name(cert.get()));

    const X509_ALGOR* alg = nullptr;
    X509_get0_signature(nullptr, &alg, cert.get());
    const ASN1_OBJECT* obj = nullptr;
    X509_ALGOR_get0(&obj, nullptr, nullptr, alg);
    char buf[128];
    OBJ_obj2txt(buf, sizeof buf, obj, 0);
    r.signature_algorithm = buf;
    r.signature_digest = digest_name(OBJ_obj2nid(obj), r.signature_recognized);

    r.public_key = key_info(cert.get());
    try {
        r.not_before = asn1_time_to_timestamp(X509_get0_notBefore(cert.get()));
        r.not_after = asn1_time_to_timestamp(X509_get0_notAfter(cert.get()));
    } catch (const ParseError&) {
        throw ParseError("certificate validity dates do not parse");
    }
    if (r.not_after < r.not_before) throw ParseError("certificate notAfter precedes notBefore");
    r.fingerprint = sha256_fingerprint(cert.get());
    return r;
}

std::vector<std::size_t> chain_order(const std::vector<CertificateRecord>& chain) {
    const std::size_t n = chain.size();
    std::vector<std::size_t> order;
    if (n == 0) return order;
    // The leaf issues nothing else in the chain.
    std::size_t leaf = 0;
    for (std::size_t i = 0; i < n; ++i) {
        bool issues_other = false;
        for (std::size_t j = 0; j < n && !issues_other; ++j)
            issues_other = j != i && !chain[j].self_issued() && chain[j].issuer == chain[i].subject;
        if (!issues_other) {
            leaf = i;
            break;
        }
    }
    std::vector<bool> used(n, false);
    order.push_back(leaf);
    used[leaf] = true;
    for (std::size_t cur = leaf; !chain[cur].self_issued();) {
        std::size_t next = n;
        for (std::size_t j = 0; j < n; ++j)
            if (!used[j] && chain[j].subject == chain[cur].issuer) {
                next = j;
                break;
            }
        if (next == n) break;
        order.push_back(next);
        used[next] = true;
        cur = next;
    }
    for (std::size_t j = 0; j < n; ++j)
        if (!used[j]) order.push_back(j);
    return order;
}

std::string CertificateExtraction::to_jsonl() const {
    std::string out;
    for (const auto& r : records) out += r.to_json().dump() + "\n";
    return out;
}

CertificateExtraction extract_certificates(const std::vector<pcap::FlowRecord>& flows) {
    namespace wire = pcap::tls::version;
    CertificateExtraction out;
    std::set<std::string> psk_sessions;
    std::size_t next_chain = 0;

    for (const auto& f : flows) {
        if (!f.has_tag(pcap::ProtocolTag::Tls) && !pcap::tls::has_record_framing(f.payload[0]) &&
            !pcap::tls::has_record_framing(f.payload[1]))
            continue;
        const auto s = pcap::tls::summarize_session(f.payload[0], f.payload[1], 0);
        if (!s.server_hello) continue;
        const auto version = s.server_hello->negotiated_version();

        ServerEndpoint ep{f.server().ip.to_string(), f.server().port, {}};
        if (s.client_hello && s.client_hello->sni) ep.sni = *s.client_hello->sni;

        if (version >= wire::kTls13) {
            ++out.cert_opaque_sessions;
            ++out.cert_opaque_by_device[f.device_id];
            continue;
        }
        if (!s.certificate_message) {
            if (pcap::tls::is_psk_cipher_suite(s.server_hello->cipher_suite)) psk_sessions.insert(f.device_id);
            continue;
        }
        if (s.certificate_parse_error) {
            out.warnings.push_back({f.device_id, ep.to_string(), "Certificate message does not parse"});
            continue;
        }

        std::vector<CertificateRecord> chain;
        bool ok = true;
        for (const auto& der : s.certificate_chain) {
            try {
                chain.push_back(parse_certificate(der));
            } catch (const ParseError& e) {
                out.warnings.push_back({f.device_id, ep.to_string(), std::string("chain skipped: ") + e.what()});
                ok = false;
                break;
            }
        }
        if (!ok || chain.empty()) continue;

        const auto order = chain_order(chain);
        const std::size_t id = next_chain++;
        for (std::size_t k = 0; k < order.size(); ++k) {
            auto r = chain[order[k]];
            if (k == 0)
                r.chain_position = ChainPosition::Leaf;
            else if (k + 1 == order.size() && r.self_issued())
                r.chain_position = ChainPosition::Root;
            else
                r.chain_position = ChainPosition::Intermediate;
            r.server_endpoint = ep;
            r.device_id = f.device_id;
            r.phase = f.phase;
            r.chain_id = id;
            out.records.push_back(std::move(r));
        }
        out.certificate_model_devices.insert(f.device_id);
    }
    for (const auto& d : psk_sessions)
        if (!out.certificate_model_devices.contains(d)) out.psk_model_devices.insert(d);
    return out;
}

std::string_view to_string(FindingKind k) {
    switch (k) {
    case FindingKind::WeakSignature: return "WEAK_SIGNATURE";
    case FindingKind::WeakKey: return "WEAK_KEY";
    case FindingKind::SelfSigned: return "SELF_SIGNED";
    case FindingKind::ExcessiveValidity: return "EXCESSIVE_VALIDITY";
    case FindingKind::UnrecognizedAlgorithm: return "UNRECOGNIZED_ALGORITHM";
    }
    return "?";
}

std::optional<FindingKind> parse_finding_kind(std::string_view text) {
    for (auto k : {FindingKind::WeakSignature, FindingKind::WeakKey, FindingKind::SelfSigned,
                   FindingKind::ExcessiveValidity, FindingKind::UnrecognizedAlgorithm})
        if (iequals(text, to_string(k))) return k;
    return std::nullopt;
}

// ---- trust store ----

TrustStore::TrustStore() : store_(X509_STORE_new()) {
    if (!store_) throw Error("X509_STORE_new failed");
}

TrustStore::~TrustStore() {
    if (store_) X509_STORE_free(store_);
}

TrustStore::TrustStore(TrustStore&& other) noexcept : store_(other.store_), count_(other.count_) {
    other.store_ = nullptr;
    other.count_ = 0;
}

std::filesystem::path TrustStore::default_bundle() {
    return std::filesystem::path(IOTAUDIT_DATA_DIR) / "trust" / "ca-bundle.pem";
}

TrustStore TrustStore::load(const std::filesystem::path& pem_bundle) {
    TrustStore t;
    for (auto& c : load_pem_bundle(pem_bundle)) t.add(c.get());
    if (t.size() == 0) throw ValidationError("trust bundle " + pem_bundle.string() + " holds no certificates");
    return t;
}

void TrustStore::add(X509* root) {
    if (X509_STORE_add_cert(store_, root) != 1) {
        // Duplicates in a bundle are harmless.
        ERR_clear_error();
        return;
    }
    ++count_;
}

bool TrustStore::anchors(const std::vector<X509Ptr>& chain, std::size_t leaf, std::string* error) const {
    STACK_OF(X509)* untrusted = sk_X509_new_null();
    for (std::size_t i = 0; i < chain.size(); ++i)
        if (i != leaf) sk_X509_push(untrusted, chain[i].get());
    X509_STORE_CTX* ctx = X509_STORE_CTX_new();
    bool ok = false;
    if (ctx && X509_STORE_CTX_init(ctx, store_, chain[leaf].get(), untrusted) == 1) {
        X509_STORE_CTX_set_flags(ctx, X509_V_FLAG_NO_CHECK_TIME);
        ok = X509_verify_cert(ctx) == 1;
        if (!ok && error) *error = X509_verify_cert_error_string(X509_STORE_CTX_get_error(ctx));
    } else if (error) {
        *error = openssl_errors();
    }
    X509_STORE_CTX_free(ctx);
    sk_X509_free(untrusted);
    ERR_clear_error();
    return ok;
}

// ---- policy ----

AuditPolicy AuditPolicy::from_json(const Json& j) {
    AuditPolicy p;
    if (!j.is_object()) throw ValidationError("audit policy must be a JSON object");
    if (j.contains("weak_digests")) {
        p.weak_digests.clear();
        for (const auto& d : j.at("weak_digests")) p.weak_digests.insert(ascii_lower(d.get<std::string>()));
    }
    p.min_rsa_bits = j.value("min_rsa_bits", p.min_rsa_bits);
    p.min_ec_bits = j.value("min_ec_bits", p.min_ec_bits);
    p.max_validity_days = j.value("max_validity_days", p.max_validity_days);
    if (j.contains("trust_bundle")) p.trust_bundle = j.at("trust_bundle").get<std::string>();
    if (p.min_rsa_bits <= 0 || p.min_ec_bits <= 0 || p.max_validity_days <= 0)
        throw ValidationError("audit policy thresholds must be positive");
    return p;
}

AuditPolicy AuditPolicy::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open audit policy " + path.string());
    Json j;
    try {
        in >> j;
    } catch (const Json::exception& e) {
        throw ParseError("audit policy " + path.string() + ": " + e.what());
    }
    auto p = from_json(j);
    if (!p.trust_bundle.empty() && p.trust_bundle.is_relative()) p.trust_bundle = path.parent_path() / p.trust_bundle;
    return p;
}

Json AuditPolicy::to_json() const {
    Json j;
    j["weak_digests"] = std::vector<std::string>(weak_digests.begin(), weak_digests.end());
    j["min_rsa_bits"] = min_rsa_bits;
    j["min_ec_bits"] = min_ec_bits;
    j["max_validity_days"] = max_validity_days;
    j["trust_bundle"] = trust_bundle.string();
    return j;
}

// ---- audit ----

std::vector<CertificateFinding> audit_certificates(const std::vector<CertificateRecord>& certs,
                                                   const AuditPolicy& policy, const TrustStore& trust) {
    std::map<std::size_t, std::vector<const CertificateRecord*>> chains;
    for (const auto& c : certs) chains[c.chain_id].push_back(&c);

    std::vector<CertificateFinding> out;
    for (auto& [id, members] : chains) {
        std::vector<CertificateRecord> copy;
        for (const auto* m : members) copy.push_back(*m);
        const auto order = chain_order(copy);
        const CertificateRecord& leaf = copy[order.front()];

        auto emit = [&](const CertificateRecord& c, ChainPosition pos, FindingKind k, std::string detail) {
            out.push_back({c.device_id, c.phase, c.server_endpoint.to_string(), k, std::move(detail), c.fingerprint,
                           pos});
        };

        for (std::size_t k = 0; k < order.size(); ++k) {
            const auto& c = copy[order[k]];
            const ChainPosition pos = k == 0 ? ChainPosition::Leaf
                                      : (k + 1 == order.size() && c.self_issued()) ? ChainPosition::Root
                                                                                   : ChainPosition::Intermediate;
            if (!c.signature_recognized)
                emit(c, pos, FindingKind::UnrecognizedAlgorithm,
                     describe(c) + ": signature algorithm " + c.signature_algorithm + " not recognized");
            if (c.public_key.algorithm == "UNKNOWN")
                emit(c, pos, FindingKind::UnrecognizedAlgorithm, describe(c) + ": public key algorithm not recognized");

            if (pos != ChainPosition::Root && policy.weak_digests.contains(c.signature_digest))
                emit(c, pos, FindingKind::WeakSignature,
                     describe(c) + ": signature " + c.signature_algorithm + " (digest " + c.signature_digest + ")");

            const auto& pk = c.public_key;
            if ((pk.algorithm == "RSA" || pk.algorithm == "RSA-PSS" || pk.algorithm == "DSA") &&
                pk.size_bits < policy.min_rsa_bits)
                emit(c, pos, FindingKind::WeakKey,
                     describe(c) + ": " + pk.algorithm + " " + std::to_string(pk.size_bits) + " bits < " +
                         std::to_string(policy.min_rsa_bits));
            else if (pk.algorithm == "EC" && pk.size_bits < policy.min_ec_bits)
                emit(c, pos, FindingKind::WeakKey,
                     describe(c) + ": EC " + std::to_string(pk.size_bits) + " bits < " +
                         std::to_string(policy.min_ec_bits));

            if (pos == ChainPosition::Leaf) {
                const std::int64_t secs = (c.not_after.micros - c.not_before.micros) / kMicrosPerSecond;
                if (secs > policy.max_validity_days * kSecondsPerDay)
                    emit(c, pos, FindingKind::ExcessiveValidity,
                         describe(c) + ": valid " + format_day(c.not_before) + " to " + format_day(c.not_after) +
                             " (" + std::to_string(secs / kSecondsPerDay) + " days > " +
                             std::to_string(policy.max_validity_days) + ")");
            }
        }

        if (leaf.self_issued()) {
            emit(leaf, ChainPosition::Leaf, FindingKind::SelfSigned,
                 describe(leaf) + ": subject equals issuer");
        } else {
            std::vector<X509Ptr> x509s;
            for (std::size_t k : order) x509s.push_back(parse_der(copy[k].der_bytes));
            std::string err;
            if (!trust.anchors(x509s, 0, &err)) {
                const auto& top = copy[order.back()];
                emit(leaf, ChainPosition::Leaf, FindingKind::SelfSigned,
                     describe(leaf) + ": chain ends at " + top.subject + " (issuer " + top.issuer +
                         "), not in trust store: " + err);
            }
        }
    }
    return out;
}

std::string findings_csv(const std::vector<CertificateFinding>& findings) {
    std::ostringstream out;
    out << "device_id,phase,endpoint,finding,chain_position,sha256,detail\n";
    for (const auto& f : findings)
        out << csv_row({f.device_id, f.phase ? std::string(iotaudit::to_string(*f.phase)) : "",
                        f.endpoint, std::string(to_string(f.finding)),
                        std::string(to_string(f.chain_position)), f.fingerprint, f.detail})
            << '\n';
    return out.str();
}

Json finding_table(const std::vector<CertificateFinding>& findings,
                   const std::function<std::string(const std::string&)>& column_of) {
    std::map<std::string, std::map<std::string, std::map<std::string, std::set<std::string>>>> sets;
    for (const auto& f : findings) {
        auto& cols = sets[std::string(to_string(f.finding))][column_of(f.device_id)];
        if (f.phase) cols[std::string(iotaudit::to_string(*f.phase))].insert(f.device_id);
        cols["FULL"].insert(f.device_id);
    }
    Json j = Json::object();
    for (const auto& [kind, cols] : sets)
        for (const auto& [col, rows] : cols)
            for (const auto& [row, devices] : rows) j[kind][col][row] = devices.size();
    return j;
}

} // namespace iotaudit::tls
