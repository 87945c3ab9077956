#include "iotaudit/pcap/dns.hpp"

#include "iotaudit/core/strings.hpp"

namespace iotaudit::pcap::dns {

bool Message::has_record_type(std::uint16_t type) const {
    for (const auto* section : {&answers, &authority, &additional})
        for (const auto& rr : *section)
            if (rr.type == type) return true;
    return false;
}

namespace {

struct Cursor {
    ByteView wire;
    std::size_t pos = 0;
    bool ok = true;

    std::uint16_t u16() {
        if (pos + 2 > wire.size()) {
            ok = false;
            return 0;
        }
        const auto v = load_be16(wire.data() + pos);
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        if (pos + 4 > wire.size()) {
            ok = false;
            return 0;
        }
        const auto v = load_be32(wire.data() + pos);
        pos += 4;
        return v;
    }
};

// Reads a possibly-compressed name starting at `pos`; returns the position after it.
std::optional<std::size_t> read_name(ByteView wire, std::size_t pos, std::string& out) {
    out.clear();
    std::optional<std::size_t> resume;
    int jumps = 0;
    for (;;) {
        if (pos >= wire.size()) return std::nullopt;
        const std::uint8_t len = wire[pos];
        if ((len & 0xC0) == 0xC0) {
            if (pos + 1 >= wire.size() || ++jumps > 32) return std::nullopt;
            if (!resume) resume = pos + 2;
            pos = static_cast<std::size_t>(((len & 0x3F) << 8) | wire[pos + 1]);
            continue;
        }
        if ((len & 0xC0) != 0) return std::nullopt;
        ++pos;
        if (len == 0) break;
        if (pos + len > wire.size() || out.size() + len > 255) return std::nullopt;
        if (!out.empty()) out += '.';
        out.append(reinterpret_cast<const char*>(wire.data() + pos), len);
        pos += len;
    }
    out = ascii_lower(out);
    return resume ? *resume : pos;
}

bool read_records(Cursor& c, std::uint16_t count, std::vector<ResourceRecord>& out) {
    for (std::uint16_t i = 0; i < count; ++i) {
        ResourceRecord rr;
        auto next = read_name(c.wire, c.pos, rr.name);
        if (!next) return false;
        c.pos = *next;
        rr.type = c.u16();
        rr.klass = c.u16();
        rr.ttl = c.u32();
        const std::uint16_t rdlen = c.u16();
        if (!c.ok || c.pos + rdlen > c.wire.size()) return false;
        rr.rdata_length = rdlen;
        const std::uint8_t* rd = c.wire.data() + c.pos;
        if (rr.type == rrtype::kA && rdlen == 4) {
            rr.address = IpAddress::v4(rd);
        } else if (rr.type == rrtype::kAaaa && rdlen == 16) {
            rr.address = IpAddress::v6(rd);
        } else if (rr.type == rrtype::kCname) {
            if (!read_name(c.wire, c.pos, rr.target)) return false;
        }
        c.pos += rdlen;
        out.push_back(std::move(rr));
    }
    return true;
}

void encode_name(Bytes& out, const std::string& name) {
    for (const auto& label : split(name, '.')) {
        if (label.empty()) continue;
        out.push_back(static_cast<std::uint8_t>(label.size()));
        append(out, label);
    }
    out.push_back(0);
}

void encode_records(Bytes& out, const std::vector<ResourceRecord>& rrs) {
    for (const auto& rr : rrs) {
        encode_name(out, rr.name);
        append_be16(out, rr.type);
        append_be16(out, rr.klass ? rr.klass : 1);
        append_be32(out, rr.ttl);
        Bytes rdata;
        if (rr.address) {
            const auto& b = rr.address->bytes();
            rdata.assign(b.begin(), b.begin() + (rr.address->is_v4() ? 4 : 16));
        } else if (rr.type == rrtype::kCname) {
            encode_name(rdata, rr.target);
        } else if (rr.type == rrtype::kDnskey) {
            // flags=257 (KSK), protocol=3, algorithm=8, then key material
            rdata = {0x01, 0x01, 0x03, 0x08};
            for (std::size_t i = 0; i < (rr.rdata_length > 4 ? rr.rdata_length - 4 : 64); ++i)
                rdata.push_back(static_cast<std::uint8_t>((i * 131 + 7) & 0xFF));
        } else {
            rdata.assign(rr.rdata_length, 0);
        }
        append_be16(out, static_cast<std::uint16_t>(rdata.size()));
        append(out, rdata);
    }
}

} // namespace

std::optional<Message> parse_message(ByteView wire) {
    if (wire.size() < 12) return std::nullopt;
    Cursor c{wire, 0};
    Message m;
    m.id = c.u16();
    const std::uint16_t flags = c.u16();
    m.is_response = (flags & 0x8000) != 0;
    m.rcode = static_cast<std::uint8_t>(flags & 0x0F);
    if (((flags >> 11) & 0x0F) > 5) return std::nullopt; // opcode sanity
    const std::uint16_t qd = c.u16(), an = c.u16(), ns = c.u16(), ar = c.u16();
    if (qd > 64 || an > 512 || ns > 512 || ar > 512) return std::nullopt;
    for (std::uint16_t i = 0; i < qd; ++i) {
        Question q;
        auto next = read_name(wire, c.pos, q.name);
        if (!next) return std::nullopt;
        c.pos = *next;
        q.type = c.u16();
        q.klass = c.u16();
        if (!c.ok) return std::nullopt;
        m.questions.push_back(std::move(q));
    }
    if (!read_records(c, an, m.answers) || !read_records(c, ns, m.authority) || !read_records(c, ar, m.additional))
        return std::nullopt;
    return m;
}

std::vector<ByteView> split_tcp_stream(ByteView stream) {
    std::vector<ByteView> out;
    std::size_t pos = 0;
    while (pos + 2 <= stream.size()) {
        const std::size_t len = load_be16(stream.data() + pos);
        if (len == 0 || pos + 2 + len > stream.size()) break;
        out.push_back(stream.subspan(pos + 2, len));
        pos += 2 + len;
    }
    return out;
}

Bytes encode_message(const Message& msg) {
    Bytes out;
    append_be16(out, msg.id);
    std::uint16_t flags = msg.is_response ? 0x8180 : 0x0100;
    flags |= msg.rcode & 0x0F;
    append_be16(out, flags);
    append_be16(out, static_cast<std::uint16_t>(msg.questions.size()));
    append_be16(out, static_cast<std::uint16_t>(msg.answers.size()));
    append_be16(out, static_cast<std::uint16_t>(msg.authority.size()));
    append_be16(out, static_cast<std::uint16_t>(msg.additional.size()));
    for (const auto& q : msg.questions) {
        encode_name(out, q.name);
        append_be16(out, q.type);
        append_be16(out, q.klass ? q.klass : 1);
    }
    encode_records(out, msg.answers);
    encode_records(out, msg.authority);
    encode_records(out, msg.additional);
    return out;
}

} // namespace iotaudit::pcap::dns
