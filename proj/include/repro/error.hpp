#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace repro {

// Every failure the harness reports carries one of these kinds. The CLI maps
// kinds onto process exit codes, tests match on them.
enum class Errc {
    // manifest
    DuplicateParam,
    EmptyExperimentName,
    MalformedManifest,
    SchemaVersionUnsupported,
    AlreadyFinalized,
    // vcs_gate
    NotARepository,
    VcsToolUnavailable,
    DirtyWorktree,
    DestinationNotEmpty,
    // seedctl
    EntropyUnavailable,
    EmptyLabel,
    // runner
    Collision,
    SpawnFailure,
    // events
    StepRegression,
    InvalidPayload,
    CorruptLog,
    TagNotFound,
    LabelMismatch,
    NoConfusionRecords,
    // hpo
    OutOfBounds,
    IndexOutOfRange,
    DegenerateData,
    NumericalFailure,
    NonFiniteObjective,
    InvalidSpace,
    // dataprep
    NotADirectory,
    ChannelMismatch,
    NonFiniteSample,
    EmptyInput,
    DegenerateRatio,
    InvalidSpec,
    // replay
    MissingCommit,
    CloneFailure,
    CommitNotFound,
    SnapshotHashMismatch,
    // demo_trainer
    BadLabel,
    // report
    EmptySeries,
    NoRunsFound,
    // cli
    UnknownFlag,
    MissingRequired,
    BadValue,
    // shared
    IoFailure,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& detail);

    [[nodiscard]] Errc code() const noexcept { return code_; }
    [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

private:
    Errc code_;
    std::string detail_;
};

[[noreturn]] void fail(Errc code, const std::string& detail = {});

}  // namespace repro
