#include "iotaudit/dest/party.hpp"

#include "iotaudit/core/error.hpp"
#include "iotaudit/core/strings.hpp"

#include <algorithm>
#include <fstream>

namespace iotaudit::dest {

std::string_view to_string(Party p) {
    switch (p) {
    case Party::First: return "FIRST";
    case Party::Support: return "SUPPORT";
    case Party::Third: return "THIRD";
    case Party::Unresolved: return "UNRESOLVED";
    }
    return "UNRESOLVED";
}

std::optional<Party> parse_party(std::string_view text) {
    auto t = ascii_lower(trim(text));
    if (t == "first") return Party::First;
    if (t == "support") return Party::Support;
    if (t == "third") return Party::Third;
    if (t == "unresolved") return Party::Unresolved;
    return std::nullopt;
}

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

/// Case-insensitive match of `pattern` as whole words inside `org`, so
/// "xiaomi" hits "Beijing Xiaomi Mobile Software" but "mi" does not.
bool org_contains(std::string_view org, std::string_view pattern) {
    if (pattern.empty()) return false;
    auto o = ascii_lower(org);
    auto p = ascii_lower(pattern);
    for (auto pos = o.find(p); pos != std::string::npos; pos = o.find(p, pos + 1)) {
        const bool left = pos == 0 || !is_word_char(o[pos - 1]);
        const bool right = pos + p.size() == o.size() || !is_word_char(o[pos + p.size()]);
        if (left && right) return true;
    }
    return false;
}

bool is_domain_pattern(std::string_view p) { return p.find('.') != std::string_view::npos; }

std::optional<std::string> first_party_match(const DestinationRecord& d, const std::vector<std::string>& patterns,
                                             std::string_view what) {
    for (const auto& pat : patterns) {
        if (is_domain_pattern(pat)) {
            for (const auto& dom : d.domains)
                if (domain_has_suffix(dom, pat))
                    return std::string(what) + " pattern '" + pat + "' matched domain " + dom;
        } else if (d.organization != kUnknown && org_contains(d.organization, pat)) {
            return std::string(what) + " pattern '" + pat + "' matched organization " + d.organization;
        }
    }
    return std::nullopt;
}

} // namespace

bool PolicyEntry::applies_to(const pcap::DeviceMetadata* device) const {
    if (devices.empty() && brands.empty()) return true;
    if (!device) return false;
    if (std::find(devices.begin(), devices.end(), device->device_id) != devices.end()) return true;
    return std::any_of(brands.begin(), brands.end(), [&](const auto& b) { return iequals(b, device->brand); });
}

void PartyPolicyMap::add(PolicyEntry e) {
    if (trim(e.pattern).empty()) throw ValidationError("policy entry with an empty pattern");
    if (trim(e.source).empty()) throw ValidationError("policy entry '" + e.pattern + "' has no source note");
    entries_.push_back(std::move(e));
}

PartyPolicyMap PartyPolicyMap::from_json(const Json& j) {
    PartyPolicyMap m;
    const Json& list = j.is_array() ? j : j.value("entries", Json::array());
    for (const auto& e : list) {
        PolicyEntry p;
        p.pattern = e.value("pattern", "");
        const auto kind = ascii_lower(e.value("kind", is_domain_pattern(p.pattern) ? "domain" : "organization"));
        if (kind != "domain" && kind != "organization")
            throw ValidationError("policy entry '" + p.pattern + "': kind must be domain or organization");
        p.is_domain = kind == "domain";
        p.source = e.value("source", "");
        p.devices = e.value("devices", std::vector<std::string>{});
        p.brands = e.value("brands", std::vector<std::string>{});
        m.add(std::move(p));
    }
    return m;
}

PartyPolicyMap PartyPolicyMap::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open policy map " + path.string());
    try {
        return from_json(Json::parse(in));
    } catch (const Json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

PartyAttribution classify_party(const DestinationRecord& d, const pcap::DeviceMetadata* device,
                                const PartyPolicyMap& policy) {
    if (device) {
        if (auto m = first_party_match(d, device->first_party_patterns, "manufacturer"))
            return {Party::First, *m};
        if (auto m = first_party_match(d, device->app_vendors, "companion-app")) return {Party::First, *m};
    }
    for (const auto& e : policy.entries()) {
        if (!e.applies_to(device)) continue;
        if (e.is_domain) {
            for (const auto& dom : d.domains)
                if (domain_has_suffix(dom, e.pattern))
                    return {Party::Support, "policy entry '" + e.pattern + "' matched domain " + dom + " (source: " +
                                                e.source + ")"};
        } else if (d.organization != kUnknown && iequals(d.organization, e.pattern)) {
            return {Party::Support, "policy entry '" + e.pattern + "' matched organization (source: " + e.source + ")"};
        }
    }
    return {Party::Third, "no match"};
}

} // namespace iotaudit::dest
