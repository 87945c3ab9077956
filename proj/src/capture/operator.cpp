#include "iotaudit/capture/session.hpp"

#include "iotaudit/core/error.hpp"
#include "iotaudit/core/strings.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <thread>

namespace iotaudit::capture {

Timestamp SystemClock::now() { return now_utc(); }

void SystemClock::sleep(double seconds) {
    if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

Reply TerminalOperator::ask(const Prompt& p) {
    if (!p.notice.empty()) out_ << "  ! " << p.notice << "\n";
    const auto& op = *p.operation;
    if (p.kind == PromptKind::Start) {
        out_ << "[" << (p.index + 1) << "/" << p.total << "] " << op.name << " (" << to_string(op.phase) << ")\n";
        if (!op.instructions.empty()) out_ << "  " << op.instructions << "\n";
        if (op.min_duration > 0) out_ << "  minimum duration: " << op.min_duration << " s\n";
        out_ << "  press Enter to start, 'a' to abort: " << std::flush;
    } else {
        out_ << "  running " << std::fixed << std::setprecision(0) << p.elapsed << " s; press Enter when done, 'a' to abort: "
             << std::flush;
    }
    std::string line;
    if (!std::getline(in_, line)) return Reply::Abort;
    auto cmd = ascii_lower(trim(line));
    if (cmd == "a" || cmd == "abort") return Reply::Abort;
    return Reply::Confirm;
}

ScriptedOperator::ScriptedOperator(std::vector<std::string> lines, Clock& clock)
    : lines_(std::move(lines)), clock_(clock) {}

ScriptedOperator ScriptedOperator::from_file(const std::filesystem::path& path, Clock& clock) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open operator script " + path.string());
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    return ScriptedOperator(std::move(lines), clock);
}

Reply ScriptedOperator::ask(const Prompt& p) {
    const std::string expected = p.kind == PromptKind::Start ? "start" : "end";
    if (!p.notice.empty()) log_.push_back("notice: " + p.notice);
    while (pos_ < lines_.size()) {
        auto line = ascii_lower(trim(lines_[pos_++]));
        if (line.empty() || line[0] == '#') continue;
        if (line == "abort") {
            log_.push_back("abort");
            return Reply::Abort;
        }
        if (line.rfind("wait", 0) == 0) {
            double s = 0;
            try {
                s = std::stod(std::string(trim(std::string_view(line).substr(4))));
            } catch (const std::exception&) {
                throw ParseError("operator script: bad wait line '" + line + "'");
            }
            clock_.sleep(s);
            log_.push_back(line);
            continue;
        }
        if (line == "start" || line == "end") {
            if (line != expected)
                throw ParseError("operator script: expected '" + expected + "' for " + p.operation->name + ", got '" +
                                 line + "'");
            log_.push_back(line + " " + p.operation->name);
            return Reply::Confirm;
        }
        throw ParseError("operator script: unknown command '" + line + "'");
    }
    log_.push_back("script exhausted");
    return Reply::Abort;
}

} // namespace iotaudit::capture
