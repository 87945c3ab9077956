#include "iotaudit/mitm/fleet.hpp"

#include "iotaudit/core/error.hpp"
#include "iotaudit/core/strings.hpp"
#include "net.hpp"

#include <openssl/err.h>
#include <openssl/ssl.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <thread>

namespace iotaudit::mitm {

using namespace std::chrono_literals;

namespace {

constexpr std::pair<DeviceBehavior, std::string_view> kBehaviorNames[] = {
    {DeviceBehavior::Strict, "strict"},
    {DeviceBehavior::DecryptError, "decrypt_error"},
    {DeviceBehavior::BadCertificate, "bad_certificate"},
    {DeviceBehavior::DecodeError, "decode_error"},
    {DeviceBehavior::CloseNotify, "close_notify"},
    {DeviceBehavior::Reconnect, "reconnect"},
    {DeviceBehavior::NoInternet, "no_internet"},
    {DeviceBehavior::ServerFail, "server_fail"},
    {DeviceBehavior::Naive, "naive"},
};

DeviceBehavior behavior_for(MitmVerdict v) {
    switch (v) {
    case MitmVerdict::UnknownCa: return DeviceBehavior::Strict;
    case MitmVerdict::DecryptError: return DeviceBehavior::DecryptError;
    case MitmVerdict::BadCertificate: return DeviceBehavior::BadCertificate;
    case MitmVerdict::CloseNotify: return DeviceBehavior::CloseNotify;
    case MitmVerdict::DecodeError: return DeviceBehavior::DecodeError;
    case MitmVerdict::DisconnectReconnect: return DeviceBehavior::Reconnect;
    case MitmVerdict::ServerHandshakeFailed: return DeviceBehavior::ServerFail;
    case MitmVerdict::NoInternet: return DeviceBehavior::NoInternet;
    case MitmVerdict::CommunicatesNormally: return DeviceBehavior::Naive;
    case MitmVerdict::Unclassified: break;
    }
    throw ValidationError("no device behaviour produces UNCLASSIFIED");
}

std::string slug(MitmVerdict v) {
    auto s = ascii_lower(to_string(v));
    std::replace(s.begin(), s.end(), '_', '-');
    return s;
}

/// Length of the first complete HTTP/1.x message in `buf` (Content-Length
/// framing only), or 0 if more bytes are needed.
std::size_t http_message_length(const Bytes& buf) {
    const std::string_view text = as_chars(buf);
    const auto end = text.find("\r\n\r\n");
    if (end == std::string_view::npos) return 0;
    std::size_t body = 0;
    for (const auto& line : split(text.substr(0, end), '\n')) {
        const auto colon = line.find(':');
        if (colon != std::string::npos && iequals(trim(line.substr(0, colon)), "content-length"))
            body = std::stoul(std::string(trim(line.substr(colon + 1))));
    }
    const std::size_t total = end + 4 + body;
    return buf.size() >= total ? total : 0;
}

struct SslCtxDeleter {
    void operator()(SSL_CTX* c) const { SSL_CTX_free(c); }
};
using CtxPtr = std::unique_ptr<SSL_CTX, SslCtxDeleter>;

// ---- fake upstream servers ----

class FakeServers {
public:
    FakeServers(std::map<std::string, tls::X509Ptr> certs, EVP_PKEY* key) : certs_(std::move(certs)), key_(key) {
        ctx_.reset(SSL_CTX_new(TLS_server_method()));
        SSL_CTX_set_num_tickets(ctx_.get(), 0);
        SSL_CTX_set_client_hello_cb(ctx_.get(), &FakeServers::pick_cert, this);
        listener_ = net::listen_tcp("127.0.0.1", 0);
        port_ = net::local_port(listener_.get());
        acceptor_ = std::thread([this] { accept_loop(); });
    }

    ~FakeServers() { stop(); }

    void stop() {
        stopping_ = true;
        if (acceptor_.joinable()) acceptor_.join();
        std::vector<std::thread> ts;
        {
            std::lock_guard lock(mu_);
            ts.swap(conns_);
        }
        for (auto& t : ts) t.join();
    }

    std::uint16_t port() const { return port_; }
    std::map<std::pair<std::string, std::string>, Bytes> received() {
        std::lock_guard lock(mu_);
        return received_;
    }

private:
    static int pick_cert(SSL* s, int* al, void* arg) {
        auto* self = static_cast<FakeServers*>(arg);
        const unsigned char* p = nullptr;
        std::size_t len = 0;
        std::string sni;
        if (SSL_client_hello_get0_ext(s, TLSEXT_TYPE_server_name, &p, &len) && len >= 5)
            sni.assign(reinterpret_cast<const char*>(p + 5), std::min<std::size_t>(load_be16(p + 3), len - 5));
        auto it = self->certs_.find(sni);
        if (it == self->certs_.end()) {
            *al = SSL_AD_UNRECOGNIZED_NAME;
            return SSL_CLIENT_HELLO_ERROR;
        }
        SSL_use_certificate(s, it->second.get());
        SSL_use_PrivateKey(s, self->key_);
        return SSL_CLIENT_HELLO_SUCCESS;
    }

    void accept_loop() {
        while (!stopping_) {
            if (!net::wait_readable(listener_.get(), 50ms)) continue;
            sockaddr_storage peer{};
            socklen_t len = sizeof peer;
            int fd = ::accept4(listener_.get(), reinterpret_cast<sockaddr*>(&peer), &len, SOCK_CLOEXEC);
            if (fd < 0) continue;
            std::lock_guard lock(mu_);
            conns_.emplace_back([this, fd, peer] { serve(net::Fd(fd), net::address_ip(peer)); });
        }
    }

    void serve(net::Fd fd, const std::string& peer_ip) {
        net::set_io_timeout(fd.get(), 5000ms);
        SSL* ssl = SSL_new(ctx_.get());
        SSL_set_fd(ssl, fd.get());
        if (SSL_accept(ssl) == 1) {
            const char* name = SSL_get_servername(ssl, TLSEXT_NAMETYPE_host_name);
            const std::string host = name ? name : "";
            Bytes buf;
            unsigned char chunk[8192];
            for (;;) {
                const int n = SSL_read(ssl, chunk, sizeof chunk);
                if (n <= 0) break;
                buf.insert(buf.end(), chunk, chunk + n);
                {
                    std::lock_guard lock(mu_);
                    append(received_[{peer_ip, host}], ByteView(chunk, static_cast<std::size_t>(n)));
                }
                while (const std::size_t m = http_message_length(buf)) {
                    const std::string body = "{\"code\":0,\"received\":" + std::to_string(m) + "}";
                    const std::string resp = "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: " +
                                             std::to_string(body.size()) + "\r\n\r\n" + body;
                    SSL_write(ssl, resp.data(), static_cast<int>(resp.size()));
                    buf.erase(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(m));
                }
            }
            SSL_shutdown(ssl);
        }
        ERR_clear_error();
        SSL_free(ssl);
    }

    std::map<std::string, tls::X509Ptr> certs_;
    EVP_PKEY* key_;
    CtxPtr ctx_;
    net::Fd listener_;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::thread acceptor_;
    std::mutex mu_;
    std::vector<std::thread> conns_;
    std::map<std::pair<std::string, std::string>, Bytes> received_;
};

// ---- fake device connections (memory BIOs so we decide what hits the wire) ----

int client_index() {
    static const int idx = SSL_get_ex_new_index(0, nullptr, nullptr, nullptr, nullptr);
    return idx;
}

class DeviceConn {
public:
    DeviceConn(SSL_CTX* ctx, net::Fd fd, const std::string& host, DeviceBehavior behavior)
        : fd_(std::move(fd)), behavior_(behavior) {
        ssl_ = SSL_new(ctx);
        rbio_ = BIO_new(BIO_s_mem());
        wbio_ = BIO_new(BIO_s_mem());
        SSL_set_bio(ssl_, rbio_, wbio_);
        SSL_set_connect_state(ssl_);
        SSL_set_tlsext_host_name(ssl_, host.c_str());
        SSL_set1_host(ssl_, host.c_str());
        SSL_set_ex_data(ssl_, client_index(), this);
        SSL_set_verify(ssl_, SSL_VERIFY_PEER, &DeviceConn::verify_cb);
        // OpenSSL never emits decode_error from certificate checks, so this
        // device stays on TLS 1.2 where it can write the alert in the clear.
        if (behavior_ == DeviceBehavior::DecodeError) SSL_set_max_proto_version(ssl_, TLS1_2_VERSION);
    }
    ~DeviceConn() { SSL_free(ssl_); }

    bool handshake() {
        for (;;) {
            const int r = SSL_connect(ssl_);
            flush();
            if (r == 1) return true;
            if (SSL_get_error(ssl_, r) != SSL_ERROR_WANT_READ || drop_) break;
            if (fill() <= 0) return false;
        }
        if (behavior_ == DeviceBehavior::DecodeError) {
            static constexpr unsigned char alert[] = {0x15, 0x03, 0x03, 0x00, 0x02, 0x02, SSL_AD_DECODE_ERROR};
            ::send(fd_.get(), alert, sizeof alert, MSG_NOSIGNAL);
        }
        return false;
    }

    bool write(std::string_view data) {
        if (SSL_write(ssl_, data.data(), static_cast<int>(data.size())) <= 0) return false;
        flush();
        return true;
    }

    /// Reads until one complete HTTP message is buffered.
    Bytes read_message() {
        Bytes got;
        unsigned char chunk[8192];
        while (http_message_length(got) == 0) {
            const int n = SSL_read(ssl_, chunk, sizeof chunk);
            if (n > 0) {
                got.insert(got.end(), chunk, chunk + n);
                continue;
            }
            if (SSL_get_error(ssl_, n) != SSL_ERROR_WANT_READ || fill() <= 0) break;
        }
        return got;
    }

    void close_notify() {
        SSL_shutdown(ssl_);
        flush();
    }

private:
    static int verify_cb(int preverify_ok, X509_STORE_CTX* ctx) {
        SSL* ssl = static_cast<SSL*>(X509_STORE_CTX_get_ex_data(ctx, SSL_get_ex_data_X509_STORE_CTX_idx()));
        auto* self = static_cast<DeviceConn*>(SSL_get_ex_data(ssl, client_index()));
        switch (self->behavior_) {
        case DeviceBehavior::Strict: return preverify_ok;
        case DeviceBehavior::DecryptError:
            X509_STORE_CTX_set_error(ctx, X509_V_ERR_CERT_SIGNATURE_FAILURE);
            return 0;
        case DeviceBehavior::BadCertificate:
            X509_STORE_CTX_set_error(ctx, X509_V_ERR_CERT_REJECTED);
            return 0;
        case DeviceBehavior::DecodeError:
        case DeviceBehavior::Reconnect:
        case DeviceBehavior::NoInternet:
            self->drop_ = true; // walk away instead of answering
            X509_STORE_CTX_set_error(ctx, X509_V_ERR_APPLICATION_VERIFICATION);
            return 0;
        default: return 1;
        }
    }

    void flush() {
        char buf[16384];
        int n;
        while ((n = BIO_read(wbio_, buf, sizeof buf)) > 0) {
            if (drop_) continue;
            std::size_t off = 0;
            while (off < static_cast<std::size_t>(n)) {
                const ssize_t m = ::send(fd_.get(), buf + off, static_cast<std::size_t>(n) - off, MSG_NOSIGNAL);
                if (m <= 0) return;
                off += static_cast<std::size_t>(m);
            }
        }
    }

    int fill() {
        char buf[16384];
        const ssize_t n = ::recv(fd_.get(), buf, sizeof buf, 0);
        if (n > 0) BIO_write(rbio_, buf, static_cast<int>(n));
        return static_cast<int>(n);
    }

    net::Fd fd_;
    DeviceBehavior behavior_;
    SSL* ssl_ = nullptr;
    BIO* rbio_ = nullptr;
    BIO* wbio_ = nullptr;
    bool drop_ = false;
};

} // namespace

std::string_view to_string(DeviceBehavior b) {
    for (const auto& [k, name] : kBehaviorNames)
        if (k == b) return name;
    return "?";
}

std::optional<DeviceBehavior> parse_device_behavior(std::string_view text) {
    for (const auto& [k, name] : kBehaviorNames)
        if (iequals(text, name)) return k;
    return std::nullopt;
}

MitmVerdict expected_verdict(DeviceBehavior b) {
    switch (b) {
    case DeviceBehavior::Strict: return MitmVerdict::UnknownCa;
    case DeviceBehavior::DecryptError: return MitmVerdict::DecryptError;
    case DeviceBehavior::BadCertificate: return MitmVerdict::BadCertificate;
    case DeviceBehavior::DecodeError: return MitmVerdict::DecodeError;
    case DeviceBehavior::CloseNotify: return MitmVerdict::CloseNotify;
    case DeviceBehavior::Reconnect: return MitmVerdict::DisconnectReconnect;
    case DeviceBehavior::NoInternet: return MitmVerdict::NoInternet;
    case DeviceBehavior::ServerFail: return MitmVerdict::ServerHandshakeFailed;
    case DeviceBehavior::Naive: return MitmVerdict::CommunicatesNormally;
    }
    return MitmVerdict::Unclassified;
}

FleetSpec fleet_from_marginals(const std::vector<MarginalRow>& rows, std::size_t device_count) {
    if (device_count == 0 || device_count > 250 * 250) throw ValidationError("device_count out of range");
    FleetSpec spec;
    for (std::size_t i = 0; i < device_count; ++i) {
        char ip[32];
        std::snprintf(ip, sizeof ip, "127.1.%zu.%zu", i / 250, i % 250 + 1);
        char id[32];
        std::snprintf(id, sizeof id, "dev-%02zu", i);
        spec.devices.push_back({id, ip, {}});
    }
    std::size_t cursor = 0;
    int server_no = 0;
    for (const auto& row : rows) {
        if (row.devices < 0 || row.servers < row.devices || static_cast<std::size_t>(row.devices) > device_count)
            throw ValidationError("marginal row " + std::string(to_string(row.verdict)) +
                                  " needs 0 <= devices <= servers and devices <= device_count");
        const auto behavior = behavior_for(row.verdict);
        for (int k = 0; k < row.servers; ++k) {
            const int slot = k % std::max(row.devices, 1);
            auto& dev = spec.devices[(cursor + static_cast<std::size_t>(slot)) % device_count];
            char host[96];
            std::snprintf(host, sizeof host, "srv-%03d.%s.example", ++server_no, slug(row.verdict).c_str());
            dev.servers.push_back({host, behavior, 3});
        }
        cursor += static_cast<std::size_t>(row.devices);
    }
    for (auto& d : spec.devices) {
        if (d.servers.empty()) throw ValidationError("marginals leave " + d.id + " without servers");
        std::stable_partition(d.servers.begin(), d.servers.end(),
                              [](const auto& s) { return s.behavior != DeviceBehavior::NoInternet; });
        if (std::count_if(d.servers.begin(), d.servers.end(),
                          [](const auto& s) { return s.behavior == DeviceBehavior::NoInternet; }) > 1)
            throw ValidationError(d.id + " would need two NO_INTERNET servers");
    }
    return spec;
}

FleetSpec FleetSpec::from_json(const Json& j) {
    if (j.contains("marginals")) {
        std::vector<MarginalRow> rows;
        for (const auto& r : j.at("marginals")) {
            auto v = parse_mitm_verdict(r.at("verdict").get<std::string>());
            if (!v) throw ValidationError("unknown verdict " + r.at("verdict").get<std::string>());
            rows.push_back({*v, r.at("devices").get<int>(), r.at("servers").get<int>()});
        }
        return fleet_from_marginals(rows, j.at("device_count").get<std::size_t>());
    }
    FleetSpec spec;
    for (const auto& d : j.at("devices")) {
        FleetDevice dev{d.at("id").get<std::string>(), d.at("ip").get<std::string>(), {}};
        if (!starts_with_icase(dev.ip, "127.")) throw ValidationError("simulated device " + dev.id + " needs a 127.x address");
        for (const auto& s : d.at("servers")) {
            auto b = parse_device_behavior(s.at("behavior").get<std::string>());
            if (!b) throw ValidationError("unknown behaviour " + s.at("behavior").get<std::string>());
            dev.servers.push_back({s.at("host").get<std::string>(), *b, s.value("attempts", 3)});
        }
        spec.devices.push_back(std::move(dev));
    }
    return spec;
}

FleetSpec FleetSpec::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open fleet spec " + path.string());
    try {
        return from_json(Json::parse(in));
    } catch (const Json::exception& e) {
        throw ParseError("fleet spec " + path.string() + ": " + e.what());
    }
}

Json FleetSpec::to_json() const {
    Json devs = Json::array();
    for (const auto& d : devices) {
        Json servers = Json::array();
        for (const auto& s : d.servers) {
            Json sj{{"host", s.host}, {"behavior", std::string(to_string(s.behavior))}};
            if (s.behavior == DeviceBehavior::Reconnect) sj["attempts"] = s.attempts;
            servers.push_back(sj);
        }
        devs.push_back({{"id", d.id}, {"ip", d.ip}, {"servers", servers}});
    }
    return Json{{"devices", devs}};
}

RedirectRules FleetSpec::rules() const {
    RedirectRules r;
    for (const auto& d : devices) r.rules.push_back({d.id, IpAddress::require(d.ip), std::nullopt, {443}});
    return r;
}

std::map<std::pair<std::string, std::string>, MitmVerdict> FleetSpec::expected() const {
    std::map<std::pair<std::string, std::string>, MitmVerdict> out;
    for (const auto& d : devices)
        for (const auto& s : d.servers) out[{d.id, s.host + ":443"}] = expected_verdict(s.behavior);
    return out;
}

std::vector<std::string> fleet_requests(const std::string& device_id, const std::string& host) {
    const std::string body = "{\"device_name\":\"" + device_id + "\",\"device_sk\":\"sk-" + device_id +
                             "-7f3a\",\"bind\":{\"status\":\"query\",\"ts\":1700000000}}";
    return {"GET /S_PROD1_MEIDIMINI/logs/215413.log HTTP/1.1\r\nHost: " + host + "\r\nAccept: */*\r\n\r\n",
            "POST /v3/am/query_device_bind_status?lang=en HTTP/1.1\r\nHost: " + host +
                "\r\nContent-Type: application/json\r\nContent-Length: " + std::to_string(body.size()) + "\r\n\r\n" +
                body};
}

SimulationResult run_simulated_fleet(const FleetSpec& fleet, LocalCa& ca, const SimulationOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    SimulationResult result;

    // Genuine PKI: servers chain to the public root; ServerFail hosts chain
    // to a root the probe does not pin.
    auto root_key = tls::generate_rsa_key(2048);
    auto server_key = tls::generate_rsa_key(2048);
    const auto now = now_utc();
    auto ca_spec = [&](const std::string& cn) {
        tls::CertSpec s;
        s.common_name = cn;
        s.organization = "Simulated PKI";
        s.not_before = Timestamp{now.micros - 86400 * kMicrosPerSecond};
        s.not_after = Timestamp{now.micros + 3650LL * 86400 * kMicrosPerSecond};
        s.is_ca = true;
        return s;
    };
    auto public_root = tls::make_certificate(ca_spec("Simulated Public Root"), root_key.get(), nullptr, root_key.get());
    auto rogue_root = tls::make_certificate(ca_spec("Unpinned Root"), server_key.get(), nullptr, server_key.get());
    result.public_root_pem = tls::to_pem(public_root.get());

    std::map<std::string, tls::X509Ptr> certs;
    long serial = 10;
    for (const auto& d : fleet.devices)
        for (const auto& s : d.servers) {
            if (certs.contains(s.host)) continue;
            tls::CertSpec leaf;
            leaf.common_name = s.host;
            leaf.organization = "Simulated Cloud";
            leaf.dns_names = {s.host};
            leaf.not_before = Timestamp{now.micros - 86400 * kMicrosPerSecond};
            leaf.not_after = Timestamp{now.micros + 300LL * 86400 * kMicrosPerSecond};
            leaf.serial = serial++;
            const bool broken = s.behavior == DeviceBehavior::ServerFail;
            certs[s.host] = tls::make_certificate(leaf, server_key.get(), broken ? rogue_root.get() : public_root.get(),
                                                  broken ? server_key.get() : root_key.get());
        }

    FakeServers servers(std::move(certs), server_key.get());
    std::map<std::string, UpstreamTarget> hosts;
    for (const auto& d : fleet.devices)
        for (const auto& s : d.servers) hosts[s.host] = {"127.0.0.1", servers.port(), 443};

    tls::TrustStore upstream_trust;
    upstream_trust.add(public_root.get());
    ProbeOptions popt = options.probe;
    popt.listen_address = "127.0.0.1";
    popt.listen_port = 0;
    popt.mac_lookup = nullptr;
    MitmProbe probe(popt, fleet.rules(), std::make_shared<StaticResolver>(hosts), ca, upstream_trust);
    const auto probe_port = probe.start();

    CtxPtr device_ctx(SSL_CTX_new(TLS_client_method()));
    SSL_CTX_set1_cert_store(device_ctx.get(), upstream_trust.native());

    std::mutex log_mu;
    std::vector<std::thread> devices;
    for (const auto& d : fleet.devices) {
        devices.emplace_back([&, &d = d] {
            for (const auto& s : d.servers) {
                const int attempts = s.behavior == DeviceBehavior::Reconnect ? std::max(1, s.attempts) : 1;
                for (int a = 0; a < attempts; ++a) {
                    if (a > 0) std::this_thread::sleep_for(options.redial_interval);
                    ClientLog log{d.id, s.host, a + 1, false, {}, {}, {}};
                    try {
                        DeviceConn conn(device_ctx.get(), net::connect_tcp("127.0.0.1", probe_port, 5000ms, d.ip),
                                        s.host, s.behavior);
                        log.handshake_ok = conn.handshake();
                        if (log.handshake_ok && s.behavior == DeviceBehavior::Naive) {
                            for (const auto& req : fleet_requests(d.id, s.host)) {
                                if (!conn.write(req)) break;
                                append(log.sent, req);
                                append(log.received, conn.read_message());
                            }
                        }
                        if (log.handshake_ok) conn.close_notify();
                    } catch (const Error& e) {
                        log.note = e.what();
                    }
                    ERR_clear_error();
                    std::lock_guard lock(log_mu);
                    result.clients.push_back(std::move(log));
                }
            }
        });
    }
    for (auto& t : devices) t.join();
    std::this_thread::sleep_for(options.settle);

    result.probe = probe.stop();
    servers.stop();
    result.server_received = servers.received();
    result.observations = classify_sessions(result.probe.sessions, result.probe.end, options.classify);
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

} // namespace iotaudit::mitm
