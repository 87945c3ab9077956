#include "iotaudit/mitm/probe.hpp"

#include "iotaudit/core/error.hpp"
#include "iotaudit/core/strings.hpp"
#include "net.hpp"

#include <openssl/err.h>
#include <openssl/ssl.h>
#include <openssl/x509v3.h>

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <fstream>
#include <linux/netfilter_ipv4.h>
#include <mutex>
#include <poll.h>
#include <sstream>
#include <unistd.h>

namespace iotaudit::mitm {

using namespace std::chrono_literals;

// ---- redirect rules ----

RedirectRules RedirectRules::from_json(const Json& j) {
    RedirectRules out;
    const Json& arr = j.is_array() ? j : j.at("rules");
    for (const auto& r : arr) {
        RedirectRule rule;
        rule.device_id = r.at("device_id").get<std::string>();
        if (rule.device_id.empty()) throw ValidationError("redirect rule without device_id");
        if (r.contains("ip")) rule.ip = IpAddress::require(r["ip"].get<std::string>());
        if (r.contains("mac")) {
            rule.mac = MacAddress::parse(r["mac"].get<std::string>());
            if (!rule.mac) throw ValidationError("redirect rule " + rule.device_id + ": bad mac");
        }
        if (!rule.ip && !rule.mac) throw ValidationError("redirect rule " + rule.device_id + " needs an ip or a mac");
        for (const auto& p : r.value("ports", Json::array())) rule.ports.insert(p.get<std::uint16_t>());
        if (rule.ports.empty()) throw ValidationError("redirect rule " + rule.device_id + " lists no ports");
        out.rules.push_back(std::move(rule));
    }
    return out;
}

RedirectRules RedirectRules::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open redirect rules " + path.string());
    try {
        return from_json(Json::parse(in));
    } catch (const Json::exception& e) {
        throw ParseError("redirect rules " + path.string() + ": " + e.what());
    }
}

Json RedirectRules::to_json() const {
    Json arr = Json::array();
    for (const auto& r : rules) {
        Json j{{"device_id", r.device_id}, {"ports", std::vector<std::uint16_t>(r.ports.begin(), r.ports.end())}};
        if (r.ip) j["ip"] = r.ip->to_string();
        if (r.mac) j["mac"] = r.mac->to_string();
        arr.push_back(j);
    }
    return Json{{"rules", arr}};
}

const RedirectRule* RedirectRules::match(const IpAddress& ip, const std::optional<MacAddress>& mac) const {
    for (const auto& r : rules) {
        if (r.ip && *r.ip == ip) return &r;
        if (r.mac && mac && *r.mac == *mac) return &r;
    }
    return nullptr;
}

// ---- resolvers ----

std::optional<UpstreamTarget> NetfilterResolver::original_destination(int fd, const std::string&) {
    sockaddr_storage ss{};
    socklen_t len = sizeof(sockaddr_in);
    if (::getsockopt(fd, SOL_IP, SO_ORIGINAL_DST, &ss, &len) != 0) return std::nullopt;
    return UpstreamTarget{net::address_ip(ss), net::address_port(ss), 0};
}

std::optional<UpstreamTarget> StaticResolver::original_destination(int, const std::string& sni) {
    if (auto it = hosts_.find(sni); it != hosts_.end()) return it->second;
    return fallback_;
}

std::optional<MacAddress> arp_lookup(const IpAddress& ip) {
    std::ifstream in("/proc/net/arp");
    std::string line;
    std::getline(in, line); // header
    const auto want = ip.to_string();
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string addr, hw_type, flags, mac;
        if (ls >> addr >> hw_type >> flags >> mac && addr == want) return MacAddress::parse(mac);
    }
    return std::nullopt;
}

// ---- probe ----

namespace {

std::string handshake_name(int type) {
    switch (type) {
    case 1: return "ClientHello";
    case 2: return "ServerHello";
    case 4: return "NewSessionTicket";
    case 8: return "EncryptedExtensions";
    case 11: return "Certificate";
    case 12: return "ServerKeyExchange";
    case 13: return "CertificateRequest";
    case 14: return "ServerHelloDone";
    case 15: return "CertificateVerify";
    case 16: return "ClientKeyExchange";
    case 20: return "Finished";
    default: return "handshake_" + std::to_string(type);
    }
}

std::string sni_from_hello(SSL* s) {
    const unsigned char* p = nullptr;
    std::size_t len = 0;
    if (!SSL_client_hello_get0_ext(s, TLSEXT_TYPE_server_name, &p, &len) || len < 5) return {};
    // list length (2), name type (1), name length (2), name
    if (p[2] != 0) return {};
    const std::size_t n = load_be16(p + 3);
    if (5 + n > len) return {};
    return std::string(reinterpret_cast<const char*>(p + 5), n);
}

int conn_index() {
    static const int idx = SSL_get_ex_new_index(0, nullptr, nullptr, nullptr, nullptr);
    return idx;
}

bool is_eof_error(SSL* ssl, int ret) {
    const int e = SSL_get_error(ssl, ret);
    if (e == SSL_ERROR_ZERO_RETURN) return true;
    if (e == SSL_ERROR_SYSCALL) return errno == 0 || errno == ECONNRESET || errno == EPIPE;
    if (e == SSL_ERROR_SSL) return ERR_GET_REASON(ERR_peek_last_error()) == SSL_R_UNEXPECTED_EOF_WHILE_READING;
    return false;
}

void append_capped(Bytes& dst, const unsigned char* p, std::size_t n, std::size_t cap) {
    const std::size_t room = cap - std::min(cap, dst.size());
    dst.insert(dst.end(), p, p + std::min(room, n));
}

struct SslDeleter {
    void operator()(SSL* s) const { SSL_free(s); }
};
using SslPtr = std::unique_ptr<SSL, SslDeleter>;

} // namespace

struct MitmProbe::Impl {
    ProbeOptions opt;
    RedirectRules rules;
    std::shared_ptr<DestinationResolver> resolver;
    LocalCa& ca;
    SSL_CTX* server_ctx = nullptr;
    SSL_CTX* client_ctx = nullptr;

    net::Fd listener;
    std::thread acceptor;
    std::atomic<bool> stopping{false};
    std::atomic<std::size_t>* connections = nullptr;
    std::mutex mu;
    std::vector<std::unique_ptr<ProbeSession>> sessions;
    std::vector<std::thread> handlers;
    std::vector<std::string> unmatched;
    Timestamp started;

    struct Conn {
        Impl* impl = nullptr;
        ProbeSession* session = nullptr;
        TranscriptWriter* w = nullptr;
        int dev_fd = -1;
        net::Fd up_fd;
        SslPtr up;
        bool upstream_failed = false;
        bool hello_seen = false;
    };

    Impl(ProbeOptions o, RedirectRules r, std::shared_ptr<DestinationResolver> res, LocalCa& c,
         const tls::TrustStore& trust)
        : opt(std::move(o)), rules(std::move(r)), resolver(std::move(res)), ca(c) {
        server_ctx = SSL_CTX_new(TLS_server_method());
        client_ctx = SSL_CTX_new(TLS_client_method());
        if (!server_ctx || !client_ctx) throw Error("SSL_CTX_new: " + tls::openssl_errors());
        // Devices may speak old protocol versions; accept whatever they offer.
        SSL_CTX_set_min_proto_version(server_ctx, TLS1_VERSION);
        SSL_CTX_set_security_level(server_ctx, 0);
        SSL_CTX_set_num_tickets(server_ctx, 0);
        SSL_CTX_set_client_hello_cb(server_ctx, &Impl::client_hello_cb, nullptr);
        SSL_CTX_set_min_proto_version(client_ctx, TLS1_VERSION);
        SSL_CTX_set_verify(client_ctx, SSL_VERIFY_PEER, nullptr);
        SSL_CTX_set1_cert_store(client_ctx, trust.native());
        for (auto* ctx : {server_ctx, client_ctx})
            SSL_CTX_set_mode(ctx, SSL_MODE_ENABLE_PARTIAL_WRITE | SSL_MODE_ACCEPT_MOVING_WRITE_BUFFER);
    }

    ~Impl() {
        SSL_CTX_free(server_ctx);
        SSL_CTX_free(client_ctx);
    }

    static void msg_cb(int write_p, int, int content_type, const void* buf, std::size_t len, SSL*, void* arg) {
        auto* c = static_cast<Conn*>(arg);
        const auto* p = static_cast<const unsigned char*>(buf);
        if (content_type == SSL3_RT_HANDSHAKE && len >= 1) {
            c->w->add(write_p ? EventKind::HandshakeSent : EventKind::HandshakeReceived, handshake_name(p[0]));
        } else if (content_type == SSL3_RT_ALERT && len >= 2) {
            c->w->add(write_p ? EventKind::AlertToDevice : EventKind::AlertFromDevice, alert_name(p[1]), 0, p[0], p[1]);
        }
    }

    static int client_hello_cb(SSL* s, int* al, void*) {
        auto* c = static_cast<Conn*>(SSL_get_ex_data(s, conn_index()));
        if (c->hello_seen) return SSL_CLIENT_HELLO_SUCCESS; // second hello after a HelloRetryRequest
        c->hello_seen = true;
        auto& sess = *c->session;
        const auto sni = sni_from_hello(s);
        c->w->add(EventKind::ClientHello, sni.empty() ? "(no SNI)" : sni);
        auto fail = [&](const std::string& reason) {
            c->w->add(EventKind::UpstreamFailed, reason);
            c->upstream_failed = true;
            *al = SSL_AD_HANDSHAKE_FAILURE;
            return SSL_CLIENT_HELLO_ERROR;
        };

        auto target = c->impl->resolver->original_destination(c->dev_fd, sni);
        if (!target) return fail("original destination unknown");
        sess.upstream_ip = target->ip;
        sess.port = target->dialed_port ? target->dialed_port : target->port;
        sess.host = sni.empty() ? target->ip : sni;

        try {
            c->up_fd = net::connect_tcp(target->ip, target->port, c->impl->opt.io_timeout);
        } catch (const IoError& e) {
            return fail(e.what());
        }
        c->up.reset(SSL_new(c->impl->client_ctx));
        SSL_set_fd(c->up.get(), c->up_fd.get());
        if (!sni.empty()) {
            SSL_set_tlsext_host_name(c->up.get(), sni.c_str());
            SSL_set1_host(c->up.get(), sni.c_str());
        } else {
            X509_VERIFY_PARAM_set1_ip_asc(SSL_get0_param(c->up.get()), target->ip.c_str());
        }
        if (SSL_connect(c->up.get()) != 1) {
            const long vr = SSL_get_verify_result(c->up.get());
            std::string reason = vr != X509_V_OK ? std::string("upstream certificate: ") +
                                                       X509_verify_cert_error_string(vr)
                                                 : "upstream handshake: " + tls::openssl_errors();
            ERR_clear_error();
            return fail(reason);
        }
        c->w->add(EventKind::UpstreamConnected, std::string("verified, ") + SSL_get_version(c->up.get()));

        X509* genuine = SSL_get0_peer_certificate(c->up.get());
        if (!genuine) return fail("upstream sent no certificate");
        const auto forged = c->impl->ca.forge(sess.host, genuine);
        if (SSL_use_certificate(s, forged.leaf.get()) != 1 || SSL_use_PrivateKey(s, c->impl->ca.leaf_key()) != 1)
            return fail("installing forged certificate: " + tls::openssl_errors());
        c->w->add(EventKind::ForgedCertificate, forged.fingerprint);
        return SSL_CLIENT_HELLO_SUCCESS;
    }

    void accept_loop() {
        while (!stopping) {
            if (!net::wait_readable(listener.get(), 100ms)) continue;
            sockaddr_storage peer{};
            socklen_t len = sizeof peer;
            int fd = ::accept4(listener.get(), reinterpret_cast<sockaddr*>(&peer), &len, SOCK_CLOEXEC);
            if (fd < 0) continue;
            ++*connections;
            std::lock_guard lock(mu);
            handlers.emplace_back([this, fd, peer] { handle(net::Fd(fd), peer); });
        }
    }

    void relay_raw(ProbeSession& sess, TranscriptWriter& w, int dev_fd, int up_fd) {
        net::set_nonblocking(dev_fd, true);
        net::set_nonblocking(up_fd, true);
        std::array<unsigned char, 16384> buf{};
        auto last = std::chrono::steady_clock::now();
        while (!stopping) {
            pollfd fds[2] = {{dev_fd, POLLIN, 0}, {up_fd, POLLIN, 0}};
            if (::poll(fds, 2, 100) <= 0) {
                if (std::chrono::steady_clock::now() - last > opt.idle_timeout) {
                    w.add(EventKind::ProbeClosed, "idle timeout");
                    return;
                }
                continue;
            }
            last = std::chrono::steady_clock::now();
            for (int i = 0; i < 2; ++i) {
                if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
                const int from = i == 0 ? dev_fd : up_fd, to = i == 0 ? up_fd : dev_fd;
                const ssize_t n = ::recv(from, buf.data(), buf.size(), 0);
                if (n <= 0) {
                    w.add(i == 0 ? EventKind::DeviceClosed : EventKind::UpstreamClosed);
                    return;
                }
                std::size_t off = 0;
                while (off < static_cast<std::size_t>(n)) {
                    const ssize_t m = ::send(to, buf.data() + off, static_cast<std::size_t>(n) - off, MSG_NOSIGNAL);
                    if (m < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
                        pollfd o{to, POLLOUT, 0};
                        ::poll(&o, 1, 100);
                        continue;
                    }
                    if (m <= 0) {
                        w.add(EventKind::ProbeClosed, "write failed");
                        return;
                    }
                    off += static_cast<std::size_t>(m);
                }
                w.add(EventKind::NonTlsRelay, i == 0 ? "device->server" : "server->device",
                      static_cast<std::uint64_t>(n));
                append_capped(i == 0 ? sess.device_plaintext : sess.server_plaintext, buf.data(),
                              static_cast<std::size_t>(n), opt.plaintext_cap);
            }
        }
        w.add(EventKind::ProbeClosed, "probe stopping");
    }

    /// Moves plaintext both ways until one side closes.
    void relay_tls(ProbeSession& sess, TranscriptWriter& w, SSL* dev, SSL* up, int dev_fd, int up_fd) {
        net::set_nonblocking(dev_fd, true);
        net::set_nonblocking(up_fd, true);
        Bytes to_up, to_dev;
        bool dev_open = true, up_open = true;
        std::array<unsigned char, 16384> buf{};
        auto last = std::chrono::steady_clock::now();

        auto pump_read = [&](SSL* src, bool is_dev, Bytes& pending, bool& open) {
            bool progress = false;
            while (open) {
                const int n = SSL_read(src, buf.data(), static_cast<int>(buf.size()));
                if (n > 0) {
                    w.add(is_dev ? EventKind::DeviceData : EventKind::ServerData, {}, static_cast<std::uint64_t>(n));
                    pending.insert(pending.end(), buf.data(), buf.data() + n);
                    append_capped(is_dev ? sess.device_plaintext : sess.server_plaintext, buf.data(),
                                  static_cast<std::size_t>(n), opt.plaintext_cap);
                    progress = true;
                    continue;
                }
                const int e = SSL_get_error(src, n);
                if (e == SSL_ERROR_WANT_READ || e == SSL_ERROR_WANT_WRITE) break;
                open = false;
                progress = true;
                const bool clean = e == SSL_ERROR_ZERO_RETURN;
                w.add(is_dev ? EventKind::DeviceClosed : EventKind::UpstreamClosed,
                      clean ? "close_notify" : (is_eof_error(src, n) ? "connection closed" : "error"));
                ERR_clear_error();
            }
            return progress;
        };
        auto pump_write = [&](SSL* dst, bool to_device, Bytes& pending, bool& open) {
            bool progress = false;
            while (open && !pending.empty()) {
                const int n = SSL_write(dst, pending.data(), static_cast<int>(pending.size()));
                if (n > 0) {
                    w.add(to_device ? EventKind::RelayedToDevice : EventKind::RelayedUpstream, {},
                          static_cast<std::uint64_t>(n));
                    pending.erase(pending.begin(), pending.begin() + n);
                    progress = true;
                    continue;
                }
                const int e = SSL_get_error(dst, n);
                if (e == SSL_ERROR_WANT_READ || e == SSL_ERROR_WANT_WRITE) break;
                open = false;
                w.add(EventKind::ProbeClosed, to_device ? "write to device failed" : "write upstream failed");
                ERR_clear_error();
            }
            return progress;
        };

        while (!stopping) {
            bool progress = pump_read(dev, true, to_up, dev_open);
            progress |= pump_read(up, false, to_dev, up_open);
            progress |= pump_write(up, false, to_up, up_open);
            progress |= pump_write(dev, true, to_dev, dev_open);
            // Done once a side has closed and whatever it sent has been passed on.
            if ((!dev_open && (to_up.empty() || !up_open)) || (!up_open && (to_dev.empty() || !dev_open))) break;
            if (progress) {
                last = std::chrono::steady_clock::now();
                continue;
            }
            pollfd fds[2] = {{dev_fd, static_cast<short>(POLLIN | (to_dev.empty() ? 0 : POLLOUT)), 0},
                             {up_fd, static_cast<short>(POLLIN | (to_up.empty() ? 0 : POLLOUT)), 0}};
            if (::poll(fds, 2, 100) == 0 && std::chrono::steady_clock::now() - last > opt.idle_timeout) {
                w.add(EventKind::ProbeClosed, "idle timeout");
                break;
            }
        }
        if (stopping) w.add(EventKind::ProbeClosed, "probe stopping");
        // Pass the close on.
        if (dev_open) SSL_shutdown(dev);
        if (up_open) SSL_shutdown(up);
    }

    void handle(net::Fd dev_fd, sockaddr_storage peer) {
        auto owned = std::make_unique<ProbeSession>();
        ProbeSession& sess = *owned;
        TranscriptWriter w(sess);
        sess.start = now_utc();
        sess.device_ip = net::address_ip(peer);
        const auto src = IpAddress::parse(sess.device_ip);
        const auto mac = src && opt.mac_lookup ? opt.mac_lookup(*src) : std::nullopt;
        const RedirectRule* rule = src ? rules.match(*src, mac) : nullptr;
        net::set_io_timeout(dev_fd.get(), opt.io_timeout);

        if (!rule) {
            {
                std::lock_guard lock(mu);
                unmatched.push_back(sess.device_ip);
            }
            // Not ours: pass it through untouched.
            if (auto t = resolver->original_destination(dev_fd.get(), {})) {
                try {
                    auto up = net::connect_tcp(t->ip, t->port, opt.io_timeout);
                    relay_raw(sess, w, dev_fd.get(), up.get());
                } catch (const IoError&) {
                }
            }
            return;
        }
        sess.device_id = rule->device_id;
        w.add(EventKind::Open, sess.device_ip);

        const auto pre = resolver->original_destination(dev_fd.get(), {});
        const std::uint16_t dialed = pre ? (pre->dialed_port ? pre->dialed_port : pre->port) : 0;
        unsigned char first = 0;
        const bool has_data = net::wait_readable(dev_fd.get(), opt.io_timeout) &&
                              ::recv(dev_fd.get(), &first, 1, MSG_PEEK) == 1;
        const bool intercept = has_data && first == 0x16 && (!pre || rule->ports.contains(dialed));

        if (!has_data) {
            w.add(EventKind::ProbeClosed, "device sent nothing");
        } else if (!intercept) {
            sess.tls = false;
            if (pre) {
                sess.upstream_ip = pre->ip;
                sess.port = dialed;
                sess.host = pre->ip;
                try {
                    auto up = net::connect_tcp(pre->ip, pre->port, opt.io_timeout);
                    relay_raw(sess, w, dev_fd.get(), up.get());
                } catch (const IoError& e) {
                    w.add(EventKind::UpstreamFailed, e.what());
                }
            } else {
                w.add(EventKind::ProbeClosed, "original destination unknown");
            }
        } else {
            Conn conn;
            conn.impl = this;
            conn.session = &sess;
            conn.w = &w;
            conn.dev_fd = dev_fd.get();
            SslPtr dev(SSL_new(server_ctx));
            SSL_set_fd(dev.get(), dev_fd.get());
            SSL_set_ex_data(dev.get(), conn_index(), &conn);
            SSL_set_msg_callback(dev.get(), &Impl::msg_cb);
            SSL_set_msg_callback_arg(dev.get(), &conn);

            errno = 0;
            const int r = SSL_accept(dev.get());
            if (r == 1) {
                w.add(EventKind::HandshakeComplete,
                      std::string(SSL_get_version(dev.get())) + " " + SSL_get_cipher_name(dev.get()));
                relay_tls(sess, w, dev.get(), conn.up.get(), dev_fd.get(), conn.up_fd.get());
            } else if (conn.upstream_failed) {
                w.add(EventKind::ProbeClosed, "upstream handshake failed");
            } else if (sess.has(EventKind::AlertFromDevice)) {
                w.add(EventKind::DeviceClosed, "after alert");
            } else if (is_eof_error(dev.get(), r)) {
                w.add(EventKind::DeviceClosed, "during handshake");
            } else if (errno == EAGAIN || errno == EWOULDBLOCK) {
                w.add(EventKind::ProbeClosed, "device handshake timed out");
            } else {
                w.add(EventKind::ProbeClosed, "handshake error: " + tls::openssl_errors());
            }
            ERR_clear_error();
            if (sess.host.empty()) sess.host = pre ? pre->ip : sess.device_ip;
            if (sess.port == 0) sess.port = dialed;
        }
        sess.end = now_utc();
        if (!sess.transcript.empty()) sess.end = std::max(sess.end, sess.transcript.back().t);
        std::lock_guard lock(mu);
        sessions.push_back(std::move(owned));
    }
};

MitmProbe::MitmProbe(ProbeOptions options, RedirectRules rules, std::shared_ptr<DestinationResolver> resolver,
                     LocalCa& ca, const tls::TrustStore& upstream_trust)
    : impl_(std::make_unique<Impl>(std::move(options), std::move(rules), std::move(resolver), ca, upstream_trust)) {
    impl_->connections = &connections_;
}

MitmProbe::~MitmProbe() {
    if (impl_->acceptor.joinable()) stop();
}

std::uint16_t MitmProbe::start() {
    std::signal(SIGPIPE, SIG_IGN); // OpenSSL socket BIOs write() to peers that may be gone
    impl_->listener = net::listen_tcp(impl_->opt.listen_address, impl_->opt.listen_port);
    impl_->started = now_utc();
    impl_->stopping = false;
    impl_->acceptor = std::thread([this] { impl_->accept_loop(); });
    return net::local_port(impl_->listener.get());
}

ProbeResult MitmProbe::stop() {
    impl_->stopping = true;
    if (impl_->acceptor.joinable()) impl_->acceptor.join();
    std::vector<std::thread> handlers;
    {
        std::lock_guard lock(impl_->mu);
        handlers.swap(impl_->handlers);
    }
    for (auto& t : handlers) t.join();
    impl_->listener.reset();

    ProbeResult out;
    out.start = impl_->started;
    out.end = now_utc();
    std::lock_guard lock(impl_->mu);
    for (auto& s : impl_->sessions) out.sessions.push_back(std::move(*s));
    impl_->sessions.clear();
    std::sort(out.sessions.begin(), out.sessions.end(), [](const auto& a, const auto& b) {
        return std::tie(a.start, a.device_id, a.host) < std::tie(b.start, b.device_id, b.host);
    });
    out.unmatched_sources = impl_->unmatched;
    out.status = out.sessions.empty() ? "NO_TRAFFIC" : "OK";
    return out;
}

ProbeResult MitmProbe::run(std::chrono::milliseconds duration) {
    start();
    std::this_thread::sleep_for(duration);
    return stop();
}

} // namespace iotaudit::mitm
