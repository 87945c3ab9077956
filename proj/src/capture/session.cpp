#include "iotaudit/capture/session.hpp"

#include "iotaudit/core/error.hpp"

#include <net/if.h>
#include <ostream>
#include <sstream>

namespace iotaudit::capture {

namespace {

Timestamp to_millis(Timestamp t) { return Timestamp::from_millis(t.millis()); }

std::string format_seconds(double s) {
    std::ostringstream o;
    o.precision(3);
    o << s;
    return o.str();
}

} // namespace

SessionResult run_capture_session(const OperationProcess& process, const SessionOptions& options, Operator& op,
                                  Clock& clock, CaptureProcess& capture) {
    if (options.device_id.empty()) throw PreconditionError("device id is required");
    if (options.check_interface && if_nametoindex(options.iface.c_str()) == 0)
        throw PreconditionError("capture interface '" + options.iface + "' does not exist");
    std::error_code ec;
    std::filesystem::create_directories(options.out_dir, ec);
    if (ec || !std::filesystem::is_directory(options.out_dir))
        throw PreconditionError("output directory " + options.out_dir.string() + " is not writable");

    SessionResult result;
    result.raw_capture = options.out_dir / (options.device_id + "_raw.pcap");
    result.timestamps_path = options.out_dir / (options.device_id + "_timestamps.tsv");
    result.timestamps.device_id = options.device_id;

    capture.start(options.iface, result.raw_capture); // throws before any timestamp file exists

    auto& ts = result.timestamps;
    auto flush = [&](bool complete) {
        ts.complete = complete;
        write_timestamps(result.timestamps_path, ts);
    };
    auto log = [&](const std::string& msg) {
        if (options.log) *options.log << msg << "\n";
    };

    try {
        const auto total = process.operations.size();
        for (std::size_t i = 0; i < total && !result.aborted; ++i) {
            const auto& operation = process.operations[i];
            Prompt prompt{PromptKind::Start, &operation, i, total, 0, {}};
            if (op.ask(prompt) == Reply::Abort) {
                result.aborted = true;
                break;
            }
            const auto confirmed = to_millis(clock.now());
            auto start = confirmed;
            // Keep windows strictly disjoint at millisecond resolution.
            if (!ts.entries.empty() && start <= ts.entries.back().end)
                start = Timestamp::from_millis(ts.entries.back().end.millis() + 1);
            log("start " + operation.name);

            prompt.kind = PromptKind::End;
            while (true) {
                prompt.elapsed = static_cast<double>(clock.now().micros - confirmed.micros) / 1e6;
                if (op.ask(prompt) == Reply::Abort) {
                    result.aborted = true;
                    break;
                }
                const auto now = to_millis(clock.now());
                const double elapsed = static_cast<double>(now.micros - confirmed.micros) / 1e6;
                if (elapsed + 1e-9 < operation.min_duration) {
                    prompt.notice = "minimum duration " + format_seconds(operation.min_duration) +
                                    " s not reached (" + format_seconds(elapsed) + " s elapsed)";
                    log("refused end of " + operation.name + ": " + prompt.notice);
                    continue;
                }
                ts.entries.push_back({operation.name, operation.phase, start, std::max(now, start)});
                log("end " + operation.name);
                flush(i + 1 == total);
                break;
            }
        }
        if (result.aborted) flush(false);
        else if (total == 0) flush(true);
    } catch (...) {
        capture.stop();
        try {
            flush(false);
        } catch (...) {
        }
        throw;
    }
    capture.stop();
    return result;
}

} // namespace iotaudit::capture
