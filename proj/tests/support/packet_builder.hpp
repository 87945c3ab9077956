#pragma once

// Frame builders for synthetic captures. Test-only.

#include "iotaudit/core/bytes.hpp"
#include "iotaudit/core/ip.hpp"
#include "iotaudit/core/time.hpp"
#include "iotaudit/pcap/capture_file.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace iotaudit::testing {

inline const MacAddress kDeviceMac{{0x02, 0x00, 0x00, 0x00, 0x00, 0x01}};
inline const MacAddress kRouterMac{{0x02, 0x00, 0x00, 0x00, 0x00, 0xFE}};

struct L2 {
    MacAddress src = kDeviceMac;
    MacAddress dst = kRouterMac;
};

Bytes udp_frame(const IpAddress& src, std::uint16_t sport, const IpAddress& dst, std::uint16_t dport, ByteView payload,
                L2 l2 = {});
Bytes tcp_frame(const IpAddress& src, std::uint16_t sport, const IpAddress& dst, std::uint16_t dport,
                std::uint32_t seq, std::uint32_t ack, std::uint8_t flags, ByteView payload, L2 l2 = {});
Bytes icmp_frame(const IpAddress& src, const IpAddress& dst, L2 l2 = {});

struct TimedFrame {
    Timestamp ts;
    Bytes frame;
};

/// Scripted TCP conversation with consistent sequence numbers.
class TcpConversation {
public:
    TcpConversation(IpAddress client, std::uint16_t client_port, IpAddress server, std::uint16_t server_port,
                    std::uint32_t client_isn = 1000, std::uint32_t server_isn = 50000);

    void handshake(Timestamp ts);
    /// Sends `data` from the client, split into `mss`-sized segments.
    void client_send(Timestamp ts, ByteView data, std::size_t mss = 1400);
    void server_send(Timestamp ts, ByteView data, std::size_t mss = 1400);
    void close(Timestamp ts);

    std::vector<TimedFrame>& frames() { return frames_; }

private:
    void send(bool from_client, Timestamp ts, ByteView data, std::size_t mss);

    IpAddress client_, server_;
    std::uint16_t cport_, sport_;
    std::uint32_t cseq_, sseq_;
    L2 c2s_{kDeviceMac, kRouterMac};
    L2 s2c_{kRouterMac, kDeviceMac};
    std::vector<TimedFrame> frames_;
};

/// Writes frames (in the given order) to a classic pcap.
Bytes to_pcap(const std::vector<TimedFrame>& frames);

/// Deterministic pseudo-random bytes (splitmix64).
Bytes random_bytes(std::size_t n, std::uint64_t seed);
/// Printable ASCII from a small skewed alphabet (about 2.6 bits per byte).
Bytes ascii_text(std::size_t n, std::uint64_t seed);

/// gzip container around zlib deflate output.
Bytes gzip_compress(ByteView data);

IpAddress ip(const char* text);

} // namespace iotaudit::testing
