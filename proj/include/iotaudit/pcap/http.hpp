#pragma once

#include "iotaudit/core/bytes.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace iotaudit::pcap::http {

struct Message {
    bool is_request = false;
    std::string method;  // requests
    std::string target;  // requests
    int status = 0;      // responses
    std::string version;
    std::vector<std::pair<std::string, std::string>> headers;

    std::size_t offset = 0;        // start of the start-line within the stream
    std::size_t header_length = 0; // start-line + headers + blank line
    std::size_t body_offset = 0;
    std::size_t body_length = 0;   // de-chunked length when chunked

    /// Case-insensitive lookup of the first header with this name.
    std::optional<std::string> header(std::string_view name) const;
};

/// True when the stream begins with an HTTP/1.x request or status line.
bool looks_like_http(ByteView stream);

/// Splits a one-direction byte stream into HTTP/1.x messages. Stops at the
/// first byte run that is not a well-formed start-line.
std::vector<Message> parse_stream(ByteView stream, std::size_t max_messages = 256);

/// Copies a message body, removing chunked transfer framing when present.
Bytes body_bytes(ByteView stream, const Message& msg);

} // namespace iotaudit::pcap::http
