#include "net.hpp"

#include "iotaudit/core/error.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <poll.h>
#include <unistd.h>

namespace iotaudit::mitm::net {

Fd::~Fd() { reset(); }

Fd& Fd::operator=(Fd&& o) noexcept {
    if (this != &o) {
        reset();
        fd_ = o.release();
    }
    return *this;
}

void Fd::reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
}

std::optional<sockaddr_storage> make_address(const std::string& ip, std::uint16_t port, socklen_t& len) {
    sockaddr_storage ss{};
    auto* v4 = reinterpret_cast<sockaddr_in*>(&ss);
    auto* v6 = reinterpret_cast<sockaddr_in6*>(&ss);
    if (inet_pton(AF_INET, ip.c_str(), &v4->sin_addr) == 1) {
        v4->sin_family = AF_INET;
        v4->sin_port = htons(port);
        len = sizeof(sockaddr_in);
        return ss;
    }
    if (inet_pton(AF_INET6, ip.c_str(), &v6->sin6_addr) == 1) {
        v6->sin6_family = AF_INET6;
        v6->sin6_port = htons(port);
        len = sizeof(sockaddr_in6);
        return ss;
    }
    return std::nullopt;
}

std::string address_ip(const sockaddr_storage& a) {
    char buf[INET6_ADDRSTRLEN] = {};
    if (a.ss_family == AF_INET)
        inet_ntop(AF_INET, &reinterpret_cast<const sockaddr_in&>(a).sin_addr, buf, sizeof buf);
    else if (a.ss_family == AF_INET6)
        inet_ntop(AF_INET6, &reinterpret_cast<const sockaddr_in6&>(a).sin6_addr, buf, sizeof buf);
    return buf;
}

std::uint16_t address_port(const sockaddr_storage& a) {
    if (a.ss_family == AF_INET) return ntohs(reinterpret_cast<const sockaddr_in&>(a).sin_port);
    if (a.ss_family == AF_INET6) return ntohs(reinterpret_cast<const sockaddr_in6&>(a).sin6_port);
    return 0;
}

Fd listen_tcp(const std::string& ip, std::uint16_t port, int backlog) {
    socklen_t len = 0;
    auto addr = make_address(ip, port, len);
    if (!addr) throw ValidationError("bad listen address " + ip);
    Fd fd(::socket(addr->ss_family, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!fd) throw IoError(std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&*addr), len) != 0)
        throw IoError("bind " + ip + ":" + std::to_string(port) + ": " + std::strerror(errno));
    if (::listen(fd.get(), backlog) != 0) throw IoError(std::string("listen: ") + std::strerror(errno));
    return fd;
}

std::uint16_t local_port(int fd) {
    sockaddr_storage ss{};
    socklen_t len = sizeof ss;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&ss), &len);
    return address_port(ss);
}

Fd connect_tcp(const std::string& ip, std::uint16_t port, std::chrono::milliseconds timeout,
               const std::string& source_ip) {
    socklen_t len = 0;
    auto addr = make_address(ip, port, len);
    if (!addr) throw IoError("bad address " + ip);
    Fd fd(::socket(addr->ss_family, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!fd) throw IoError(std::string("socket: ") + std::strerror(errno));
    if (!source_ip.empty()) {
        socklen_t slen = 0;
        auto src = make_address(source_ip, 0, slen);
        if (!src || ::bind(fd.get(), reinterpret_cast<sockaddr*>(&*src), slen) != 0)
            throw IoError("bind source " + source_ip + ": " + std::strerror(errno));
    }
    set_nonblocking(fd.get(), true);
    if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&*addr), len) != 0) {
        if (errno != EINPROGRESS) throw IoError("connect " + ip + ":" + std::to_string(port) + ": " + std::strerror(errno));
        pollfd p{fd.get(), POLLOUT, 0};
        const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
        if (r == 0) throw IoError("connect " + ip + ":" + std::to_string(port) + ": timed out");
        int err = 0;
        socklen_t elen = sizeof err;
        ::getsockopt(fd.get(), SOL_SOCKET, SO_ERROR, &err, &elen);
        if (err != 0) throw IoError("connect " + ip + ":" + std::to_string(port) + ": " + std::strerror(err));
    }
    set_nonblocking(fd.get(), false);
    set_io_timeout(fd.get(), timeout);
    return fd;
}

void set_io_timeout(int fd, std::chrono::milliseconds timeout) {
    timeval tv{};
    tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
    tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

void set_nonblocking(int fd, bool on) {
    const int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, on ? flags | O_NONBLOCK : flags & ~O_NONBLOCK);
}

bool wait_readable(int fd, std::chrono::milliseconds timeout) {
    pollfd p{fd, POLLIN, 0};
    return ::poll(&p, 1, static_cast<int>(timeout.count())) > 0;
}

} // namespace iotaudit::mitm::net
