#pragma once

#include "repro/seedctl.hpp"
#include "repro/util.hpp"
#include "repro/vcs_gate.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace repro {

using Param = std::pair<std::string, std::string>;
using ParamList = std::vector<Param>;

struct EnvFingerprint {
    std::string os_name;
    std::string tool_version;
    std::string hostname;
    std::string determinism_note;

    friend bool operator==(const EnvFingerprint&, const EnvFingerprint&) = default;
};

EnvFingerprint current_environment(std::string determinism_note = {});

enum class RunStatus { pending, running, succeeded, failed };

std::string_view to_string(RunStatus s);
std::string_view to_string(seedctl::SeedOrigin o);

inline constexpr int kManifestSchemaVersion = 1;
inline constexpr std::string_view kToolVersion = "repro-harness 0.1.0";

struct RunManifest {
    int schema_version = kManifestSchemaVersion;
    std::string experiment_name;
    vcs::CodeRef code_ref;
    ParamList params;
    std::uint64_t seed = 0;
    seedctl::SeedOrigin seed_origin = seedctl::SeedOrigin::user;
    EnvFingerprint env;
    TimePoint created_at;
    RunStatus status = RunStatus::pending;
    std::optional<std::int64_t> exit_code;
    std::optional<std::int64_t> duration_ms;
    std::map<std::string, double> metrics_summary;
    // The wrapped command, verbatim; needed to replay arbitrary programs.
    std::vector<std::string> command;

    friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

RunManifest create_manifest(std::string experiment_name, ParamList params, vcs::CodeRef code_ref,
                            std::uint64_t seed, seedctl::SeedOrigin seed_origin, EnvFingerprint env,
                            const Clock& clock = system_clock());

// Canonical, newline-terminated JSON. Key order:
//   schema_version, experiment_name, code_ref, params, seed, seed_origin, env,
//   created_at, status, exit_code, duration_ms, metrics_summary, command
std::string serialize_manifest(const RunManifest& m);

// Strict: unknown or missing keys and invariant violations are rejected.
RunManifest parse_manifest(std::string_view bytes);

RunManifest finalize_manifest(const RunManifest& m, std::int64_t exit_code, std::int64_t duration_ms,
                              std::map<std::string, double> metrics_summary);

// Empty string when valid, otherwise the first violated invariant.
std::string manifest_violation(const RunManifest& m);

// Extracts `--name value` / `--name=value` pairs from passthrough tokens.
// A flag followed by another flag or nothing gets an empty value.
ParamList params_from_tokens(const std::vector<std::string>& tokens);

RunManifest load_manifest(const fs::path& path);
void store_manifest(const fs::path& path, const RunManifest& m);

}  // namespace repro
