#pragma once

#include "iotaudit/core/json.hpp"
#include "iotaudit/core/phase.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace iotaudit::capture {

/// One step the operator performs on the device.
struct Operation {
    std::string name;
    PhaseLabel phase = PhaseLabel::Setup;
    std::string instructions;
    double min_duration = 0; // seconds
};

/// The predefined operation sequence for a device category.
struct OperationProcess {
    std::string device_category;
    std::vector<Operation> operations;
};

/// Parses and validates (unique names, known phases, min_duration >= 0).
/// Throws ValidationError.
OperationProcess process_from_json(const Json& j);
Json process_to_json(const OperationProcess& p);
OperationProcess load_process(const std::filesystem::path& path);

} // namespace iotaudit::capture
