#include "iotaudit/capture/session.hpp"

#include "iotaudit/core/error.hpp"

#include <cerrno>
#include <chrono>
#include <cstring>
#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

namespace iotaudit::capture {

namespace {

std::string substitute(std::string arg, const std::string& key, const std::string& value) {
    for (auto pos = arg.find(key); pos != std::string::npos; pos = arg.find(key, pos + value.size()))
        arg.replace(pos, key.size(), value);
    return arg;
}

} // namespace

SubprocessCapture::SubprocessCapture(std::vector<std::string> argv_template, double grace_seconds)
    : template_(std::move(argv_template)), grace_(grace_seconds) {
    if (template_.empty()) throw ValidationError("capture command is empty");
}

SubprocessCapture::~SubprocessCapture() {
    try {
        stop();
    } catch (...) {
    }
}

std::vector<std::string> SubprocessCapture::default_command() {
    return {"tcpdump", "-i", "{iface}", "-U", "-s", "0", "-w", "{out}"};
}

void SubprocessCapture::start(const std::string& iface, const std::filesystem::path& output) {
    if (pid_ > 0) throw PreconditionError("capture already running");
    std::vector<std::string> args;
    for (const auto& a : template_) args.push_back(substitute(substitute(a, "{iface}", iface), "{out}", output.string()));
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);

    int fds[2];
    if (pipe2(fds, O_CLOEXEC) != 0) throw IoError(std::string("pipe: ") + std::strerror(errno));
    const pid_t pid = fork();
    if (pid < 0) {
        close(fds[0]);
        close(fds[1]);
        throw IoError(std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
        close(fds[0]);
        execvp(argv[0], argv.data());
        const int err = errno;
        [[maybe_unused]] auto n = write(fds[1], &err, sizeof err);
        _exit(127);
    }
    close(fds[1]);
    int child_errno = 0;
    const auto n = read(fds[0], &child_errno, sizeof child_errno);
    close(fds[0]);
    if (n == sizeof child_errno) {
        waitpid(pid, nullptr, 0);
        throw IoError("cannot run capture command '" + args[0] + "': " + std::strerror(child_errno));
    }
    // exec succeeded; make sure it did not die straight away (bad interface, no permission).
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(grace_);
    while (std::chrono::steady_clock::now() < deadline) {
        int status = 0;
        if (waitpid(pid, &status, WNOHANG) == pid) {
            throw IoError("capture command '" + args[0] + "' exited during startup with status " +
                          std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status)));
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    pid_ = pid;
}

void SubprocessCapture::stop() {
    if (pid_ <= 0) return;
    kill(pid_, SIGINT);
    int status = 0;
    for (int i = 0; i < 250; ++i) {
        if (waitpid(pid_, &status, WNOHANG) == pid_) {
            pid_ = -1;
            return;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    kill(pid_, SIGKILL);
    waitpid(pid_, &status, 0);
    pid_ = -1;
}

} // namespace iotaudit::capture
