#include "repro/process.hpp"

#include "repro/error.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

extern char** environ;

namespace repro::process {

namespace {

struct Argv {
    std::vector<std::string> storage;
    std::vector<char*> ptrs;

    explicit Argv(std::vector<std::string> items) : storage(std::move(items)) {
        ptrs.reserve(storage.size() + 1);
        for (auto& s : storage) ptrs.push_back(s.data());
        ptrs.push_back(nullptr);
    }
};

std::vector<std::string> merged_environment(const std::map<std::string, std::string>& overrides) {
    std::vector<std::string> env;
    for (char** e = environ; e && *e; ++e) {
        std::string entry(*e);
        auto eq = entry.find('=');
        std::string key = entry.substr(0, eq);
        if (overrides.count(key)) continue;
        env.push_back(std::move(entry));
    }
    for (const auto& [k, v] : overrides) env.push_back(k + "=" + v);
    return env;
}

int decode_status(int status) {
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
    return -1;
}

int wait_child(pid_t pid) {
    int status = 0;
    while (waitpid(pid, &status, 0) < 0) {
        if (errno != EINTR) fail(Errc::IoFailure, std::string("waitpid: ") + std::strerror(errno));
    }
    return decode_status(status);
}

// The exec-error pipe is close-on-exec: reading EOF means exec succeeded,
// reading an int means it failed with that errno.
[[noreturn]] void child_exec_failed(int err_fd) {
    int e = errno;
    [[maybe_unused]] auto n = write(err_fd, &e, sizeof e);
    _exit(127);
}

void check_exec(int err_read_fd, pid_t pid, const std::string& program) {
    int child_errno = 0;
    ssize_t n;
    do {
        n = read(err_read_fd, &child_errno, sizeof child_errno);
    } while (n < 0 && errno == EINTR);
    close(err_read_fd);
    if (n == sizeof child_errno) {
        wait_child(pid);
        fail(Errc::SpawnFailure, program + ": " + std::strerror(child_errno));
    }
}

}  // namespace

Output run_capture(const std::vector<std::string>& argv, const std::filesystem::path& cwd) {
    if (argv.empty()) fail(Errc::SpawnFailure, "empty command");
    Argv args(argv);
    const std::string cwd_str = cwd.string();

    int out_pipe[2], err_pipe[2], exec_pipe[2];
    if (pipe(out_pipe) != 0 || pipe(err_pipe) != 0 || pipe2(exec_pipe, O_CLOEXEC) != 0)
        fail(Errc::IoFailure, "pipe failed");

    pid_t pid = fork();
    if (pid < 0) fail(Errc::SpawnFailure, "fork failed");
    if (pid == 0) {
        dup2(out_pipe[1], STDOUT_FILENO);
        dup2(err_pipe[1], STDERR_FILENO);
        close(out_pipe[0]);
        close(out_pipe[1]);
        close(err_pipe[0]);
        close(err_pipe[1]);
        close(exec_pipe[0]);
        int devnull = open("/dev/null", O_RDONLY);
        if (devnull >= 0) dup2(devnull, STDIN_FILENO);
        if (!cwd_str.empty() && chdir(cwd_str.c_str()) != 0) child_exec_failed(exec_pipe[1]);
        execvp(args.ptrs[0], args.ptrs.data());
        child_exec_failed(exec_pipe[1]);
    }
    close(out_pipe[1]);
    close(err_pipe[1]);
    close(exec_pipe[1]);

    Output result;
    pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
    std::string* sinks[2] = {&result.out, &result.err};
    int open_count = 2;
    char buf[4096];
    while (open_count > 0) {
        if (poll(fds, 2, -1) < 0) {
            if (errno == EINTR) continue;
            break;
        }
        for (int i = 0; i < 2; ++i) {
            if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
            ssize_t n = read(fds[i].fd, buf, sizeof buf);
            if (n > 0) {
                sinks[i]->append(buf, static_cast<std::size_t>(n));
            } else if (n == 0 || errno != EINTR) {
                close(fds[i].fd);
                fds[i].fd = -1;
                --open_count;
            }
        }
    }
    check_exec(exec_pipe[0], pid, argv[0]);
    result.exit_code = wait_child(pid);
    return result;
}

int run_to_files(const std::vector<std::string>& argv, const SpawnOptions& opts) {
    if (argv.empty()) fail(Errc::SpawnFailure, "empty command");
    Argv args(argv);
    Argv env(merged_environment(opts.env_overrides));
    const std::string cwd_str = opts.cwd.string();

    int out_fd = open(opts.stdout_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (out_fd < 0) fail(Errc::IoFailure, "cannot open " + opts.stdout_path.string());
    int err_fd = open(opts.stderr_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (err_fd < 0) {
        close(out_fd);
        fail(Errc::IoFailure, "cannot open " + opts.stderr_path.string());
    }
    int exec_pipe[2];
    if (pipe2(exec_pipe, O_CLOEXEC) != 0) {
        close(out_fd);
        close(err_fd);
        fail(Errc::IoFailure, "pipe failed");
    }

    pid_t pid = fork();
    if (pid < 0) fail(Errc::SpawnFailure, "fork failed");
    if (pid == 0) {
        dup2(out_fd, STDOUT_FILENO);
        dup2(err_fd, STDERR_FILENO);
        close(exec_pipe[0]);
        int devnull = open("/dev/null", O_RDONLY);
        if (devnull >= 0) dup2(devnull, STDIN_FILENO);
        if (!cwd_str.empty() && chdir(cwd_str.c_str()) != 0) child_exec_failed(exec_pipe[1]);
        execvpe(args.ptrs[0], args.ptrs.data(), env.ptrs.data());
        child_exec_failed(exec_pipe[1]);
    }
    close(out_fd);
    close(err_fd);
    close(exec_pipe[1]);
    check_exec(exec_pipe[0], pid, argv[0]);
    return wait_child(pid);
}

std::filesystem::path self_executable() {
    std::error_code ec;
    auto p = std::filesystem::read_symlink("/proc/self/exe", ec);
    if (ec) fail(Errc::IoFailure, "cannot resolve /proc/self/exe");
    return p;
}

}  // namespace repro::process
