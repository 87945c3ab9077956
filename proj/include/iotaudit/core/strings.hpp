#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace iotaudit {

std::string ascii_lower(std::string_view s);
std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
bool iequals(std::string_view a, std::string_view b);
bool starts_with_icase(std::string_view s, std::string_view prefix);

/// True when `domain` equals `suffix` or ends with `.suffix` (label-aligned, case-insensitive).
bool domain_has_suffix(std::string_view domain, std::string_view suffix);

/// RFC 4180 field quoting for CSV output.
std::string csv_field(std::string_view s);

/// Joins already-rendered CSV fields with commas.
std::string csv_row(const std::vector<std::string>& fields);

/// Parses one CSV line (RFC 4180 quoting, no embedded newlines).
std::vector<std::string> parse_csv_line(std::string_view line);

/// Fixed-point rendering used in every report so outputs are locale-independent and stable.
std::string format_fixed(double v, int decimals);

} // namespace iotaudit
