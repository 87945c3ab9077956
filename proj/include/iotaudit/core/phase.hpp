#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace iotaudit {

/// Device lifecycle phase. Closed enumeration.
enum class PhaseLabel { Setup, Interaction, Idle, Deletion };

inline constexpr std::array<PhaseLabel, 4> kAllPhases{PhaseLabel::Setup, PhaseLabel::Interaction, PhaseLabel::Idle,
                                                      PhaseLabel::Deletion};

/// Upper-case wire name: SETUP, INTERACTION, IDLE, DELETION.
std::string_view to_string(PhaseLabel phase);

/// Case-insensitive; nullopt for anything outside the enumeration.
std::optional<PhaseLabel> parse_phase(std::string_view text);

/// Like parse_phase but throws ParseError.
PhaseLabel require_phase(std::string_view text);

} // namespace iotaudit
