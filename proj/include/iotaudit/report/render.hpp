#pragma once

#include "iotaudit/core/json.hpp"

#include <optional>
#include <string>

namespace iotaudit::report {

/// Markdown tables from a bundle summary, in the order the measurements are
/// usually read: destinations, encryption, protocols, certificates, PII, and
/// the probe verdicts when a mitm_verdicts.csv is supplied.
std::string render_markdown(const Json& summary, const std::optional<std::string>& mitm_verdicts_csv = std::nullopt);

} // namespace iotaudit::report
