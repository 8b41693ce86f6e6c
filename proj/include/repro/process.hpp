#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace repro::process {

struct Output {
    int exit_code = 0;
    std::string out;
    std::string err;
};

// Runs argv[0] (PATH lookup) and collects both output streams.
// Throws Error(SpawnFailure) when the program cannot be executed at all.
Output run_capture(const std::vector<std::string>& argv, const std::filesystem::path& cwd = {});

struct SpawnOptions {
    std::filesystem::path cwd;
    std::map<std::string, std::string> env_overrides;
    std::filesystem::path stdout_path;
    std::filesystem::path stderr_path;
};

// Runs to completion with stdout/stderr redirected to files. A child killed
// by signal N reports 128+N.
int run_to_files(const std::vector<std::string>& argv, const SpawnOptions& opts);

std::filesystem::path self_executable();

}  // namespace repro::process
