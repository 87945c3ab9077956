#pragma once

// Socket plumbing shared by the probe and the simulated fleet.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>

#include <netinet/in.h>
#include <sys/socket.h>

namespace iotaudit::mitm::net {

/// Owns a file descriptor.
class Fd {
public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    ~Fd();
    Fd(Fd&& o) noexcept : fd_(o.release()) {}
    Fd& operator=(Fd&& o) noexcept;
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;

    int get() const { return fd_; }
    int release() {
        int f = fd_;
        fd_ = -1;
        return f;
    }
    explicit operator bool() const { return fd_ >= 0; }
    void reset();

private:
    int fd_ = -1;
};

std::optional<sockaddr_storage> make_address(const std::string& ip, std::uint16_t port, socklen_t& len);
std::string address_ip(const sockaddr_storage& a);
std::uint16_t address_port(const sockaddr_storage& a);

/// Listening TCP socket; port 0 picks one.
Fd listen_tcp(const std::string& ip, std::uint16_t port, int backlog = 128);
std::uint16_t local_port(int fd);

/// Connects with a timeout, optionally binding the source address first.
/// Throws IoError with the reason.
Fd connect_tcp(const std::string& ip, std::uint16_t port, std::chrono::milliseconds timeout,
               const std::string& source_ip = {});

void set_io_timeout(int fd, std::chrono::milliseconds timeout);
void set_nonblocking(int fd, bool on);
/// Waits for readability; false on timeout.
bool wait_readable(int fd, std::chrono::milliseconds timeout);

} // namespace iotaudit::mitm::net
