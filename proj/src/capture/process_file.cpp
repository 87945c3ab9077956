#include "iotaudit/capture/process_file.hpp"

#include "iotaudit/core/error.hpp"

#include <fstream>
#include <set>

namespace iotaudit::capture {

OperationProcess process_from_json(const Json& j) {
    if (!j.is_object()) throw ValidationError("operation process: expected a JSON object");
    OperationProcess p;
    p.device_category = j.value("device_category", "");
    if (!j.contains("operations") || !j["operations"].is_array())
        throw ValidationError("operation process: missing 'operations' list");
    std::set<std::string> seen;
    for (const auto& o : j["operations"]) {
        Operation op;
        if (!o.contains("name") || !o["name"].is_string() || o["name"].get<std::string>().empty())
            throw ValidationError("operation process: every operation needs a name");
        op.name = o["name"].get<std::string>();
        if (!seen.insert(op.name).second) throw ValidationError("operation process: duplicate operation '" + op.name + "'");
        if (!o.contains("phase") || !o["phase"].is_string())
            throw ValidationError("operation '" + op.name + "': missing phase");
        auto phase = parse_phase(o["phase"].get<std::string>());
        if (!phase) throw ValidationError("operation '" + op.name + "': unknown phase '" + o["phase"].get<std::string>() + "'");
        op.phase = *phase;
        op.instructions = o.value("instructions", "");
        op.min_duration = o.value("min_duration", 0.0);
        if (!(op.min_duration >= 0)) throw ValidationError("operation '" + op.name + "': min_duration must be >= 0");
        p.operations.push_back(std::move(op));
    }
    return p;
}

Json process_to_json(const OperationProcess& p) {
    Json ops = Json::array();
    for (const auto& op : p.operations)
        ops.push_back({{"name", op.name},
                       {"phase", std::string(to_string(op.phase))},
                       {"instructions", op.instructions},
                       {"min_duration", op.min_duration}});
    return {{"device_category", p.device_category}, {"operations", ops}};
}

OperationProcess load_process(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open operation process file " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return process_from_json(j);
}

} // namespace iotaudit::capture
