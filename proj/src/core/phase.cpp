#include "iotaudit/core/phase.hpp"

#include "iotaudit/core/error.hpp"
#include "iotaudit/core/strings.hpp"

#include <string>

namespace iotaudit {

std::string_view to_string(PhaseLabel phase) {
    switch (phase) {
    case PhaseLabel::Setup: return "SETUP";
    case PhaseLabel::Interaction: return "INTERACTION";
    case PhaseLabel::Idle: return "IDLE";
    case PhaseLabel::Deletion: return "DELETION";
    }
    return "SETUP";
}

std::optional<PhaseLabel> parse_phase(std::string_view text) {
    for (PhaseLabel p : kAllPhases)
        if (iequals(text, to_string(p))) return p;
    return std::nullopt;
}

PhaseLabel require_phase(std::string_view text) {
    if (auto p = parse_phase(text)) return *p;
    throw ParseError("unknown lifecycle phase '" + std::string(text) + "'");
}

} // namespace iotaudit
