#include "repro/error.hpp"

namespace repro {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::DuplicateParam: return "DuplicateParam";
        case Errc::EmptyExperimentName: return "EmptyExperimentName";
        case Errc::MalformedManifest: return "MalformedManifest";
        case Errc::SchemaVersionUnsupported: return "SchemaVersionUnsupported";
        case Errc::AlreadyFinalized: return "AlreadyFinalized";
        case Errc::NotARepository: return "NotARepository";
        case Errc::VcsToolUnavailable: return "VcsToolUnavailable";
        case Errc::DirtyWorktree: return "DirtyWorktree";
        case Errc::DestinationNotEmpty: return "DestinationNotEmpty";
        case Errc::EntropyUnavailable: return "EntropyUnavailable";
        case Errc::EmptyLabel: return "EmptyLabel";
        case Errc::Collision: return "Collision";
        case Errc::SpawnFailure: return "SpawnFailure";
        case Errc::StepRegression: return "StepRegression";
        case Errc::InvalidPayload: return "InvalidPayload";
        case Errc::CorruptLog: return "CorruptLog";
        case Errc::TagNotFound: return "TagNotFound";
        case Errc::LabelMismatch: return "LabelMismatch";
        case Errc::NoConfusionRecords: return "NoConfusionRecords";
        case Errc::OutOfBounds: return "OutOfBounds";
        case Errc::IndexOutOfRange: return "IndexOutOfRange";
        case Errc::DegenerateData: return "DegenerateData";
        case Errc::NumericalFailure: return "NumericalFailure";
        case Errc::NonFiniteObjective: return "NonFiniteObjective";
        case Errc::InvalidSpace: return "InvalidSpace";
        case Errc::NotADirectory: return "NotADirectory";
        case Errc::ChannelMismatch: return "ChannelMismatch";
        case Errc::NonFiniteSample: return "NonFiniteSample";
        case Errc::EmptyInput: return "EmptyInput";
        case Errc::DegenerateRatio: return "DegenerateRatio";
        case Errc::InvalidSpec: return "InvalidSpec";
        case Errc::MissingCommit: return "MissingCommit";
        case Errc::CloneFailure: return "CloneFailure";
        case Errc::CommitNotFound: return "CommitNotFound";
        case Errc::SnapshotHashMismatch: return "SnapshotHashMismatch";
        case Errc::BadLabel: return "BadLabel";
        case Errc::EmptySeries: return "EmptySeries";
        case Errc::NoRunsFound: return "NoRunsFound";
        case Errc::UnknownFlag: return "UnknownFlag";
        case Errc::MissingRequired: return "MissingRequired";
        case Errc::BadValue: return "BadValue";
        case Errc::IoFailure: return "IoFailure";
    }
    return "Unknown";
}

namespace {
std::string compose(Errc code, const std::string& detail) {
    std::string msg(errc_name(code));
    if (!detail.empty()) {
        msg += ": ";
        msg += detail;
    }
    return msg;
}
}  // namespace

Error::Error(Errc code, const std::string& detail)
    : std::runtime_error(compose(code, detail)), code_(code), detail_(detail) {}

void fail(Errc code, const std::string& detail) { throw Error(code, detail); }

}  // namespace repro
