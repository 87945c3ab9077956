#include "iotaudit/pcap/http.hpp"

#include "iotaudit/core/strings.hpp"

#include <algorithm>
#include <array>
#include <charconv>

namespace iotaudit::pcap::http {

namespace {

constexpr std::array<std::string_view, 9> kMethods{"GET ",     "POST ",  "PUT ",   "HEAD ",   "DELETE ",
                                                   "OPTIONS ", "PATCH ", "TRACE ", "CONNECT "};

std::optional<std::size_t> find_crlf(std::string_view s, std::size_t from) {
    const auto p = s.find("\r\n", from);
    if (p == std::string_view::npos) return std::nullopt;
    return p;
}

bool parse_start_line(std::string_view line, Message& m) {
    if (line.starts_with("HTTP/1.")) {
        const auto sp = line.find(' ');
        if (sp == std::string_view::npos || sp + 4 > line.size()) return false;
        m.is_request = false;
        m.version = std::string(line.substr(0, sp));
        int code = 0;
        auto [p, ec] = std::from_chars(line.data() + sp + 1, line.data() + sp + 4, code);
        if (ec != std::errc{} || p != line.data() + sp + 4) return false;
        m.status = code;
        return true;
    }
    for (auto method : kMethods) {
        if (!line.starts_with(method)) continue;
        const auto rest = line.substr(method.size());
        const auto sp = rest.rfind(' ');
        if (sp == std::string_view::npos || !rest.substr(sp + 1).starts_with("HTTP/")) return false;
        m.is_request = true;
        m.method = std::string(method.substr(0, method.size() - 1));
        m.target = std::string(rest.substr(0, sp));
        m.version = std::string(rest.substr(sp + 1));
        return true;
    }
    return false;
}

// Returns the byte length consumed by a chunked body and its de-chunked size.
std::pair<std::size_t, std::size_t> measure_chunked(std::string_view s, std::size_t from) {
    std::size_t pos = from, total = 0;
    for (;;) {
        auto eol = find_crlf(s, pos);
        if (!eol) return {s.size() - from, total};
        std::size_t n = 0;
        auto line = s.substr(pos, *eol - pos);
        if (auto semi = line.find(';'); semi != std::string_view::npos) line = line.substr(0, semi);
        auto [p, ec] = std::from_chars(line.data(), line.data() + line.size(), n, 16);
        if (ec != std::errc{}) return {s.size() - from, total};
        pos = *eol + 2;
        if (n == 0) {
            // optional trailers then CRLF
            while (auto t = find_crlf(s, pos)) {
                const bool blank = *t == pos;
                pos = *t + 2;
                if (blank) break;
            }
            return {std::min(pos, s.size()) - from, total};
        }
        if (pos + n > s.size()) return {s.size() - from, total + (s.size() - pos)};
        total += n;
        pos += n + 2;
    }
}

} // namespace

std::optional<std::string> Message::header(std::string_view name) const {
    for (const auto& [k, v] : headers)
        if (iequals(k, name)) return v;
    return std::nullopt;
}

bool looks_like_http(ByteView stream) {
    const auto s = as_chars(stream);
    if (s.starts_with("HTTP/1.")) return true;
    for (auto m : kMethods)
        if (s.starts_with(m)) return true;
    return false;
}

std::vector<Message> parse_stream(ByteView stream, std::size_t max_messages) {
    std::vector<Message> out;
    const auto s = as_chars(stream);
    std::size_t pos = 0;
    while (pos < s.size() && out.size() < max_messages) {
        Message m;
        m.offset = pos;
        auto eol = find_crlf(s, pos);
        if (!eol || !parse_start_line(s.substr(pos, *eol - pos), m)) break;
        std::size_t cur = *eol + 2;
        bool complete = false;
        while (auto e = find_crlf(s, cur)) {
            if (*e == cur) {
                cur += 2;
                complete = true;
                break;
            }
            const auto line = s.substr(cur, *e - cur);
            const auto colon = line.find(':');
            if (colon != std::string_view::npos)
                m.headers.emplace_back(std::string(trim(line.substr(0, colon))), std::string(trim(line.substr(colon + 1))));
            cur = *e + 2;
        }
        if (!complete) {
            // Header block cut off by the capture; keep what was parsed.
            m.header_length = s.size() - pos;
            m.body_offset = s.size();
            out.push_back(std::move(m));
            break;
        }
        m.header_length = cur - pos;
        m.body_offset = cur;
        std::size_t consumed = 0;
        const auto te = m.header(std::string_view("Transfer-Encoding"));
        if (te && ascii_lower(*te).find("chunked") != std::string::npos) {
            auto [used, len] = measure_chunked(s, cur);
            consumed = used;
            m.body_length = len;
        } else if (auto cl = m.header("Content-Length")) {
            std::size_t n = 0;
            std::from_chars(cl->data(), cl->data() + cl->size(), n);
            consumed = std::min(n, s.size() - cur);
            m.body_length = consumed;
        } else if (!m.is_request && m.status != 204 && m.status != 304 && (m.status < 100 || m.status >= 200)) {
            consumed = s.size() - cur; // read-until-close response
            m.body_length = consumed;
        }
        pos = cur + consumed;
        out.push_back(std::move(m));
    }
    return out;
}

Bytes body_bytes(ByteView stream, const Message& msg) {
    const auto s = as_chars(stream);
    const auto te = msg.header("Transfer-Encoding");
    if (!te || ascii_lower(*te).find("chunked") == std::string::npos) {
        const auto start = std::min(msg.body_offset, stream.size());
        const auto len = std::min(msg.body_length, stream.size() - start);
        return Bytes(stream.begin() + static_cast<std::ptrdiff_t>(start),
                     stream.begin() + static_cast<std::ptrdiff_t>(start + len));
    }
    Bytes out;
    std::size_t pos = msg.body_offset;
    while (pos < s.size()) {
        auto eol = find_crlf(s, pos);
        if (!eol) break;
        std::size_t n = 0;
        auto line = s.substr(pos, *eol - pos);
        if (auto semi = line.find(';'); semi != std::string_view::npos) line = line.substr(0, semi);
        if (std::from_chars(line.data(), line.data() + line.size(), n, 16).ec != std::errc{} || n == 0) break;
        pos = *eol + 2;
        const std::size_t take = std::min(n, s.size() - pos);
        out.insert(out.end(), stream.begin() + static_cast<std::ptrdiff_t>(pos),
                   stream.begin() + static_cast<std::ptrdiff_t>(pos + take));
        pos += n + 2;
    }
    return out;
}

} // namespace iotaudit::pcap::http
