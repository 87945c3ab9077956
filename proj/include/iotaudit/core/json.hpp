#pragma once

// Single entry point for nlohmann/json so every translation unit sees the vendored copy.
#include <json.hpp>

namespace iotaudit {
using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;
} // namespace iotaudit
