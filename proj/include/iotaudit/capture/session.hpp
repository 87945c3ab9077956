#pragma once

#include "iotaudit/capture/process_file.hpp"
#include "iotaudit/capture/timestamps.hpp"
#include "iotaudit/core/time.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace iotaudit::capture {

class Clock {
public:
    virtual ~Clock() = default;
    virtual Timestamp now() = 0;
    virtual void sleep(double seconds) = 0;
};

class SystemClock : public Clock {
public:
    Timestamp now() override;
    void sleep(double seconds) override;
};

/// Only moves when told to. `sleep` advances it.
class ManualClock : public Clock {
public:
    explicit ManualClock(Timestamp start = {}) : now_(start) {}
    Timestamp now() override { return now_; }
    void sleep(double seconds) override { now_.micros += static_cast<std::int64_t>(seconds * 1e6); }

private:
    Timestamp now_;
};

enum class Reply { Confirm, Abort };

enum class PromptKind { Start, End };

struct Prompt {
    PromptKind kind;
    const Operation* operation;
    std::size_t index; // 0-based position in the process
    std::size_t total;
    double elapsed = 0;   // seconds since start confirmation (End prompts)
    std::string notice;   // e.g. why the previous confirmation was refused
};

class Operator {
public:
    virtual ~Operator() = default;
    virtual Reply ask(const Prompt& prompt) = 0;
};

/// Reads from a terminal: Enter confirms, `a` / `abort` aborts, EOF aborts.
class TerminalOperator : public Operator {
public:
    TerminalOperator(std::istream& in, std::ostream& out) : in_(in), out_(out) {}
    Reply ask(const Prompt& prompt) override;

private:
    std::istream& in_;
    std::ostream& out_;
};

/// Replays an operator script. One command per line:
/// `start`, `end`, `wait <seconds>` (sleeps on the clock), `abort`.
/// Blank lines and `#` comments are ignored. Running out of lines aborts.
class ScriptedOperator : public Operator {
public:
    ScriptedOperator(std::vector<std::string> lines, Clock& clock);
    static ScriptedOperator from_file(const std::filesystem::path& path, Clock& clock);

    Reply ask(const Prompt& prompt) override;
    const std::vector<std::string>& log() const { return log_; }

private:
    std::vector<std::string> lines_;
    std::size_t pos_ = 0;
    Clock& clock_;
    std::vector<std::string> log_;
};

/// A running packet capture.
class CaptureProcess {
public:
    virtual ~CaptureProcess() = default;
    /// Throws IoError when the capture cannot be started.
    virtual void start(const std::string& iface, const std::filesystem::path& output) = 0;
    virtual void stop() = 0;
};

/// Runs an external capture command. `{iface}` and `{out}` in the argument
/// template are substituted. An exec failure or an exit within the grace
/// period counts as a failed start.
class SubprocessCapture : public CaptureProcess {
public:
    explicit SubprocessCapture(std::vector<std::string> argv_template = default_command(), double grace_seconds = 0.5);
    ~SubprocessCapture() override;

    static std::vector<std::string> default_command();

    void start(const std::string& iface, const std::filesystem::path& output) override;
    void stop() override;

private:
    std::vector<std::string> template_;
    double grace_;
    int pid_ = -1;
};

struct SessionOptions {
    std::string device_id;
    std::string iface;
    std::filesystem::path out_dir;
    bool check_interface = true;
    std::ostream* log = nullptr;
};

struct SessionResult {
    std::filesystem::path raw_capture;
    std::filesystem::path timestamps_path;
    TimestampFile timestamps;
    bool aborted = false;
};

/// Starts the capture, walks the operator through every operation, records
/// start/end confirmations and stops the capture. A failed capture start
/// throws before any timestamp file is written. The timestamp file is
/// rewritten after each completed operation and marked incomplete on abort.
SessionResult run_capture_session(const OperationProcess& process, const SessionOptions& options, Operator& op,
                                  Clock& clock, CaptureProcess& capture);

} // namespace iotaudit::capture
