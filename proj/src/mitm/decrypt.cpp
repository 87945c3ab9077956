#include "iotaudit/mitm/decrypt.hpp"

#include "iotaudit/core/strings.hpp"
#include "iotaudit/pcap/http.hpp"

#include <algorithm>
#include <cctype>

namespace iotaudit::mitm {

namespace {

constexpr std::string_view kRedacted = "<redacted>";

std::string url_decode(std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '+') {
            out += ' ';
        } else if (s[i] == '%' && i + 2 < s.size() && std::isxdigit(static_cast<unsigned char>(s[i + 1])) &&
                   std::isxdigit(static_cast<unsigned char>(s[i + 2]))) {
            out += static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16));
            i += 2;
        } else {
            out += s[i];
        }
    }
    return out;
}

struct FieldSink {
    const DecryptOptions& opt;
    std::vector<ApiField>& out;

    void add(const std::string& name, const std::string& value, const char* location) {
        const auto lower = ascii_lower(name);
        const bool sensitive = std::any_of(opt.sensitive_patterns.begin(), opt.sensitive_patterns.end(),
                                           [&](const auto& p) { return lower.find(ascii_lower(p)) != std::string::npos; });
        out.push_back({name, opt.reveal_values ? value : std::string(kRedacted), location, sensitive});
    }

    void form(std::string_view text, const char* location) {
        for (const auto& pair : split(text, '&')) {
            if (pair.empty()) continue;
            const auto eq = pair.find('=');
            add(url_decode(pair.substr(0, eq)), eq == std::string::npos ? "" : url_decode(pair.substr(eq + 1)),
                location);
        }
    }

    void json(const Json& j) {
        if (j.is_object()) {
            for (const auto& [k, v] : j.items()) {
                if (v.is_structured())
                    json(v);
                else
                    add(k, v.is_string() ? v.get<std::string>() : v.dump(), "json");
            }
        } else if (j.is_array()) {
            for (const auto& v : j) json(v);
        }
    }
};

} // namespace

Json ApiExchange::to_json() const {
    Json j{{"device_id", device_id}, {"endpoint", endpoint}, {"http", http}};
    if (http) {
        j["method"] = method;
        j["path"] = path;
        j["header_names"] = header_names;
        Json fs = Json::array();
        for (const auto& f : fields)
            fs.push_back({{"name", f.name}, {"value", f.value}, {"location", f.location}, {"sensitive", f.sensitive}});
        j["fields"] = fs;
    } else {
        j["raw_bytes"] = raw_bytes;
        j["printable_fraction"] = printable_fraction;
    }
    return j;
}

std::vector<ApiExchange> decrypt_transcripts(const std::vector<ProbeSession>& sessions, const DecryptOptions& options) {
    std::vector<ApiExchange> out;
    for (const auto& s : sessions) {
        if (!s.tls || s.total(EventKind::RelayedUpstream) == 0 || s.device_plaintext.empty()) continue;
        const ByteView stream(s.device_plaintext);
        if (!pcap::http::looks_like_http(stream)) {
            ApiExchange x;
            x.device_id = s.device_id;
            x.endpoint = s.endpoint();
            x.http = false;
            x.raw_bytes = s.device_plaintext.size();
            const auto printable = std::count_if(s.device_plaintext.begin(), s.device_plaintext.end(), [](auto c) {
                return (c >= 0x20 && c < 0x7F) || c == '\n' || c == '\r' || c == '\t';
            });
            x.printable_fraction = static_cast<double>(printable) / static_cast<double>(x.raw_bytes);
            out.push_back(std::move(x));
            continue;
        }
        for (const auto& msg : pcap::http::parse_stream(stream)) {
            if (!msg.is_request) continue;
            ApiExchange x;
            x.device_id = s.device_id;
            x.endpoint = s.endpoint();
            x.method = msg.method;
            const auto q = msg.target.find('?');
            x.path = msg.target.substr(0, q);
            for (const auto& [name, value] : msg.headers) x.header_names.push_back(name);
            FieldSink sink{options, x.fields};
            if (q != std::string::npos) sink.form(std::string_view(msg.target).substr(q + 1), "query");
            const auto body = pcap::http::body_bytes(stream, msg);
            if (!body.empty()) {
                const auto ct = ascii_lower(msg.header("Content-Type").value_or(""));
                const std::string text(as_chars(body));
                if (ct.find("json") != std::string::npos || (!text.empty() && (text[0] == '{' || text[0] == '['))) {
                    try {
                        sink.json(Json::parse(text));
                    } catch (const Json::exception&) {
                    }
                } else if (ct.find("x-www-form-urlencoded") != std::string::npos) {
                    sink.form(text, "form");
                }
            }
            out.push_back(std::move(x));
        }
    }
    return out;
}

} // namespace iotaudit::mitm
