#pragma once

#include "repro/manifest.hpp"
#include "repro/seedctl.hpp"
#include "repro/util.hpp"
#include "repro/vcs_gate.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace repro::runner {

struct RunRequest {
    std::string experiment_name;
    std::vector<std::string> command;
    ParamList params;
    fs::path base_dir = "runs";
    bool allow_dirty = false;
    std::uint64_t multi_run = 1;
    std::optional<std::uint64_t> user_seed;
    std::uint64_t parallel = 1;
    std::string determinism_note;
    // Working directory of the child; empty means the current directory.
    fs::path workdir;
    // Extra snapshot ignore rules on top of the defaults.
    std::vector<std::string> ignore_rules;
};

struct RunResult {
    fs::path run_dir;
    RunManifest manifest;
    int exit_code = 0;
    std::int64_t duration_ms = 0;
};

// <base>/<experiment_name>/<YYYYMMDDThhmmssmmm>/run-<index>/, created empty.
// Throws Collision if it already exists.
fs::path prepare_run_dir(const fs::path& base, const std::string& experiment_name, TimePoint started_at,
                         std::uint64_t run_index);

// Where the code of a run comes from, decided once per batch by the gate.
struct CodeSource {
    std::optional<vcs::CodeRef> commit;
    fs::path snapshot_root;
    std::vector<std::string> ignore_rules;

    [[nodiscard]] bool needs_snapshot() const { return !commit.has_value(); }
};

CodeSource resolve_code(const vcs::Repository& repo, bool allow_dirty, const fs::path& base_dir,
                        const std::vector<std::string>& extra_ignore = {});

// Uses the git adapter on req.workdir. Outside a repository the gate refuses
// unless allow_dirty, in which case the working directory is snapshotted.
CodeSource resolve_code(const RunRequest& req);

// Snapshot sources are copied into <run_dir>/code.
vcs::CodeRef materialize_code_ref(const CodeSource& source, const fs::path& run_dir);

// Built-in subcommands named as the first command token run through this
// executable (e.g. "demo-train ...").
std::vector<std::string> resolve_command(const std::vector<std::string>& command);

// Runs the child with RUN_SEED=seed, RUN_DIR, RUN_MANIFEST. The manifest is
// written with status=running before the spawn and finalized afterwards.
// A nonzero child exit is a failed result, not an error.
RunResult execute_with_seed(const RunRequest& req, const fs::path& run_dir, const vcs::CodeRef& code_ref,
                            std::uint64_t seed, seedctl::SeedOrigin origin, const Clock& clock = system_clock());

// RUN_SEED = derive_subseed(root, "run/<index>").
RunResult execute(const RunRequest& req, std::uint64_t run_index, const fs::path& run_dir,
                  const vcs::CodeRef& code_ref, const seedctl::RootSeed& root,
                  const Clock& clock = system_clock());

struct BatchResult {
    fs::path batch_dir;
    seedctl::RootSeed root;
    std::vector<RunResult> runs;
};

// Gate, seed resolution, then N runs into sibling run-<i> directories with a
// batch.json summary (root seed, per-run dirs, completed indices).
BatchResult multi_run(const RunRequest& req, const Clock& clock = system_clock(),
                      const seedctl::EntropySource& entropy = seedctl::os_entropy());

// Same, with the code source already resolved (used by hpo and tests).
BatchResult multi_run(const RunRequest& req, const CodeSource& code, const Clock& clock,
                      const seedctl::EntropySource& entropy);

std::vector<fs::path> list_run_dirs(const fs::path& batch_dir);

}  // namespace repro::runner
