#pragma once

#include "repro/error.hpp"
#include "repro/util.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace repro::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUnknownFlag = 2;
inline constexpr int kExitGateRefusal = 3;
inline constexpr int kExitChildFailure = 4;
inline constexpr int kExitReplayMismatch = 5;
inline constexpr int kExitMissingRequired = 6;
inline constexpr int kExitBadValue = 7;

int exit_code_for(Errc code);

struct CliInvocation {
    std::string subcommand;  // init, run, replay, aggregate, report, hpo, data, demo-train
    std::string action;      // hpo: init|run; data: verify|stats|split|toy2d
    std::map<std::string, std::string> flags;  // without leading "--"; switches map to ""
    std::vector<std::string> passthrough;      // tokens after "--", verbatim
    bool help = false;

    friend bool operator==(const CliInvocation&, const CliInvocation&) = default;
    [[nodiscard]] bool has(const std::string& name) const { return flags.count(name) != 0; }
};

// `args` excludes the program name. Values of typed flags are checked here.
// Throws UnknownFlag, MissingRequired, BadValue.
CliInvocation parse_cli(const std::vector<std::string>& args);

std::string usage();

// Subset of TOML: `key = value` lines with string, number or string-array
// values, and # comments.
struct Config {
    std::optional<std::string> base_dir;
    std::vector<std::string> ignore;
    std::optional<double> tolerance;
};

inline constexpr std::string_view kConfigFile = ".repro-harness.toml";

// Throws BadValue(line) on syntax errors and unknown keys.
Config parse_config(std::string_view text);
// Reads <dir>/.repro-harness.toml; an absent file is an empty config.
Config load_config(const fs::path& dir);

// Flag, then REPRO_HARNESS_BASE, then config file, then "runs".
fs::path resolve_base_dir(const CliInvocation& inv, const Config& config);

// Executes the invocation; returns the process exit code. Errors are
// reported on `err` and mapped through exit_code_for.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace repro::cli
