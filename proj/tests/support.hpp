#pragma once

#include "repro/error.hpp"
#include "repro/process.hpp"
#include "repro/util.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

namespace testing {

namespace fs = std::filesystem;

class TempDir {
public:
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "repro-test-XXXXXX").string();
        if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    fs::path path_;
};

inline void write(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    repro::write_file_atomic(path, content);
}

inline repro::process::Output sh(const std::vector<std::string>& argv, const fs::path& cwd = {}) {
    return repro::process::run_capture(argv, cwd);
}

inline std::string git_ok(const fs::path& repo, std::vector<std::string> args) {
    std::vector<std::string> argv{"git", "-C", repo.string(), "-c", "user.email=test@example.com",
                                  "-c", "user.name=test", "-c", "commit.gpgsign=false"};
    argv.insert(argv.end(), args.begin(), args.end());
    auto out = sh(argv);
    if (out.exit_code != 0) throw std::runtime_error("git failed: " + out.err);
    while (!out.out.empty() && out.out.back() == '\n') out.out.pop_back();
    return out.out;
}

// Initializes a repository with the given files committed and origin
// pointing at the repository itself. Returns the HEAD commit.
inline std::string make_repo(const fs::path& dir, const std::vector<std::pair<std::string, std::string>>& files) {
    fs::create_directories(dir);
    git_ok(dir, {"init", "-q"});
    for (const auto& [rel, content] : files) write(dir / rel, content);
    git_ok(dir, {"add", "-A"});
    git_ok(dir, {"commit", "-q", "-m", "fixture"});
    git_ok(dir, {"remote", "add", "origin", fs::absolute(dir).string()});
    return git_ok(dir, {"rev-parse", "HEAD"});
}

inline std::string harness_exe() { return REPRO_HARNESS_EXE; }

inline repro::process::Output harness(const std::vector<std::string>& args, const fs::path& cwd) {
    std::vector<std::string> argv{harness_exe()};
    argv.insert(argv.end(), args.begin(), args.end());
    return sh(argv, cwd);
}

// Keeps the caller's environment from steering base-dir resolution.
inline void hermetic_env() {
    ::unsetenv("REPRO_HARNESS_BASE");
    ::unsetenv("RUN_DIR");
    ::unsetenv("RUN_SEED");
    ::unsetenv("RUN_MANIFEST");
}

template <typename F>
repro::Errc error_code_of(F&& f) {
    try {
        f();
    } catch (const repro::Error& e) {
        return e.code();
    }
    throw std::runtime_error("expected repro::Error");
}

}  // namespace testing
