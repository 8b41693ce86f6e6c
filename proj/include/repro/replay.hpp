#pragma once

#include "repro/manifest.hpp"
#include "repro/runner.hpp"
#include "repro/util.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace repro::replay {

struct RemoteSource {
    std::string repo_url;
    std::string commit_id;
};

struct SnapshotSource {
    fs::path run_dir;  // original run directory
    fs::path code_dir;  // its code/ copy
    std::string snapshot_hash;
};

struct ReplayPlan {
    std::variant<RemoteSource, SnapshotSource> source;
    std::string experiment_name;
    std::vector<std::string> command;
    ParamList params;
    std::uint64_t seed = 0;
    seedctl::SeedOrigin seed_origin = seedctl::SeedOrigin::user;
    std::string determinism_note;
};

// Throws MissingCommit when the manifest points at a snapshot that is gone,
// or at a commit with no repository URL to fetch it from.
ReplayPlan plan_replay(const RunManifest& original, const fs::path& original_run_dir);

// From an explicit (url, commit, command) triple; params are parsed from the
// command tokens. Throws InvalidSpec when the triple is incomplete.
ReplayPlan plan_replay(const std::string& repo_url, const std::string& commit_id,
                       std::vector<std::string> command, std::uint64_t seed,
                       seedctl::SeedOrigin origin, std::string experiment_name = "replay");

// Populates an empty (or absent) workspace. Remote: clone, then detached
// checkout at the commit. Snapshot: copy code/ and recompute its hash.
// Throws CloneFailure, CommitNotFound, SnapshotHashMismatch, DestinationNotEmpty.
vcs::CodeRef materialize(const ReplayPlan& plan, const fs::path& workspace);

// Exclusive lock on a cache entry, released on destruction.
class CacheLock {
public:
    explicit CacheLock(const fs::path& lock_path);
    ~CacheLock();
    CacheLock(const CacheLock&) = delete;
    CacheLock& operator=(const CacheLock&) = delete;

private:
    int fd_ = -1;
};

// <cache_root>/<sha256(url LF commit)>
fs::path cache_key_dir(const fs::path& cache_root, const RemoteSource& src);

struct ReplayOutcome {
    runner::RunResult run;
    fs::path code_dir;
};

// Materializes the code and runs the command there with the recorded seed.
// Remote sources go through the clone cache under `cache_root` and are held
// locked for the duration of the run; snapshot sources are copied into
// <run_dir>/code.
ReplayOutcome execute_replay(const ReplayPlan& plan, const fs::path& run_dir, const fs::path& cache_root,
                             const Clock& clock = system_clock());

enum class Verdict { exact, metric_equal, divergent, failed };
std::string_view to_string(Verdict v);

struct FieldDiff {
    std::string field;
    std::string original;
    std::string replay;
    friend bool operator==(const FieldDiff&, const FieldDiff&) = default;
};

struct Divergence {
    std::string tag;
    std::uint64_t step = 0;
    std::optional<double> original;  // absent when the point is missing on that side
    std::optional<double> replay;
    friend bool operator==(const Divergence&, const Divergence&) = default;
};

struct ReproductionReport {
    Verdict verdict = Verdict::failed;
    std::vector<FieldDiff> manifest_diff;
    std::optional<Divergence> first_divergence;
    std::string event_digest_original;
    std::string event_digest_replay;
    double tolerance = 0.0;
    friend bool operator==(const ReproductionReport&, const ReproductionReport&) = default;
};

inline constexpr double kDefaultTolerance = 1e-6;

// |a - b| <= tol * max(|a|, |b|)
bool within_tolerance(double a, double b, double tol);

// Params, seed and status must match, else failed. Then equal event digests
// give exact; scalar series equal within tolerance give metric_equal;
// otherwise divergent at the first (step, tag) that differs.
ReproductionReport verify_reproduction(const fs::path& original_run_dir, const fs::path& replay_run_dir,
                                       double tolerance = kDefaultTolerance);

std::string report_to_json(const ReproductionReport& r);
std::string report_summary(const ReproductionReport& r);

}  // namespace repro::replay
