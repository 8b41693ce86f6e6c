#include "repro/replay.hpp"

#include "repro/error.hpp"
#include "repro/events.hpp"
#include "repro/process.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

namespace repro::replay {

using nlohmann::ordered_json;

ReplayPlan plan_replay(const RunManifest& original, const fs::path& original_run_dir) {
    if (auto why = manifest_violation(original); !why.empty()) fail(Errc::MalformedManifest, why);
    ReplayPlan plan;
    plan.experiment_name = original.experiment_name;
    plan.command = original.command;
    plan.params = original.params;
    plan.seed = original.seed;
    plan.seed_origin = original.seed_origin;
    plan.determinism_note = original.env.determinism_note;
    if (plan.command.empty()) fail(Errc::MalformedManifest, "manifest records no command");

    const auto& ref = original.code_ref;
    if (ref.kind == vcs::CodeKind::commit) {
        if (!ref.repo_url || ref.repo_url->empty()) fail(Errc::MissingCommit, "no repository URL");
        plan.source = RemoteSource{*ref.repo_url, ref.commit_id.value_or("")};
        return plan;
    }
    const fs::path code_dir = original_run_dir / ref.snapshot_path.value_or("code");
    std::error_code ec;
    if (!fs::is_directory(code_dir, ec)) {
        if (ref.commit_id && ref.repo_url && !ref.repo_url->empty()) {
            plan.source = RemoteSource{*ref.repo_url, *ref.commit_id};
            return plan;
        }
        fail(Errc::MissingCommit, "snapshot " + code_dir.string() + " is missing and no remote is recorded");
    }
    plan.source = SnapshotSource{original_run_dir, code_dir, ref.snapshot_hash.value_or("")};
    return plan;
}

ReplayPlan plan_replay(const std::string& repo_url, const std::string& commit_id,
                       std::vector<std::string> command, std::uint64_t seed, seedctl::SeedOrigin origin,
                       std::string experiment_name) {
    if (repo_url.empty()) fail(Errc::InvalidSpec, "repository URL is empty");
    if (!is_lower_hex(commit_id, 40)) fail(Errc::InvalidSpec, "commit must be 40 lowercase hex: " + commit_id);
    if (command.empty()) fail(Errc::InvalidSpec, "command is empty");
    ReplayPlan plan;
    plan.source = RemoteSource{repo_url, commit_id};
    plan.experiment_name = std::move(experiment_name);
    plan.params = params_from_tokens(command);
    plan.command = std::move(command);
    plan.seed = seed;
    plan.seed_origin = origin;
    return plan;
}

namespace {

void require_empty(const fs::path& dir) {
    std::error_code ec;
    if (fs::exists(dir, ec) && (!fs::is_directory(dir, ec) || !fs::is_empty(dir, ec)))
        fail(Errc::DestinationNotEmpty, dir.string());
}

process::Output git(const fs::path& dir, std::vector<std::string> args) {
    std::vector<std::string> argv{"git", "-C", dir.string()};
    argv.insert(argv.end(), args.begin(), args.end());
    try {
        return process::run_capture(argv);
    } catch (const Error& e) {
        if (e.code() == Errc::SpawnFailure) fail(Errc::VcsToolUnavailable, e.detail());
        throw;
    }
}

std::string trim(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r' || s.back() == ' ')) s.pop_back();
    return s;
}

void checkout_commit(const fs::path& dir, const std::string& commit) {
    if (git(dir, {"cat-file", "-e", commit + "^{commit}"}).exit_code != 0) fail(Errc::CommitNotFound, commit);
    auto co = git(dir, {"-c", "advice.detachedHead=false", "checkout", "-q", "-f", "--detach", commit});
    if (co.exit_code != 0) fail(Errc::CloneFailure, trim(co.err));
    auto clean = git(dir, {"clean", "-q", "-f", "-d", "-x"});
    if (clean.exit_code != 0) fail(Errc::CloneFailure, trim(clean.err));
    const auto head = git(dir, {"rev-parse", "HEAD"});
    if (head.exit_code != 0 || trim(head.out) != commit) fail(Errc::CommitNotFound, commit);
}

void clone_into(const RemoteSource& src, const fs::path& workspace) {
    std::error_code ec;
    fs::create_directories(workspace.parent_path(), ec);
    process::Output out;
    try {
        out = process::run_capture({"git", "clone", "-q", "--no-checkout", src.repo_url, workspace.string()});
    } catch (const Error& e) {
        if (e.code() == Errc::SpawnFailure) fail(Errc::VcsToolUnavailable, e.detail());
        throw;
    }
    if (out.exit_code != 0) fail(Errc::CloneFailure, src.repo_url + ": " + trim(out.err));
}

}  // namespace

vcs::CodeRef materialize(const ReplayPlan& plan, const fs::path& workspace) {
    require_empty(workspace);
    if (const auto* remote = std::get_if<RemoteSource>(&plan.source)) {
        std::error_code ec;
        fs::remove(workspace, ec);
        clone_into(*remote, workspace);
        checkout_commit(workspace, remote->commit_id);
        return vcs::commit_ref(remote->commit_id, remote->repo_url);
    }
    const auto& snap = std::get<SnapshotSource>(plan.source);
    const auto rules = vcs::default_ignore_rules("");
    const auto original = vcs::hash_tree(snap.code_dir, rules);
    if (original != snap.snapshot_hash)
        fail(Errc::SnapshotHashMismatch, "recorded " + snap.snapshot_hash + ", found " + original);
    auto ref = vcs::snapshot_code(snap.code_dir, workspace, rules, workspace.parent_path());
    if (ref.snapshot_hash != snap.snapshot_hash)
        fail(Errc::SnapshotHashMismatch, "copy hashes to " + ref.snapshot_hash.value_or(""));
    return ref;
}

CacheLock::CacheLock(const fs::path& lock_path) {
    std::error_code ec;
    fs::create_directories(lock_path.parent_path(), ec);
    fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) fail(Errc::IoFailure, lock_path.string());
    while (::flock(fd_, LOCK_EX) != 0) {
        if (errno != EINTR) {
            ::close(fd_);
            fail(Errc::IoFailure, "flock " + lock_path.string());
        }
    }
}

CacheLock::~CacheLock() {
    if (fd_ >= 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
}

fs::path cache_key_dir(const fs::path& cache_root, const RemoteSource& src) {
    return cache_root / sha256_hex(src.repo_url + "\n" + src.commit_id);
}

ReplayOutcome execute_replay(const ReplayPlan& plan, const fs::path& run_dir, const fs::path& cache_root,
                             const Clock& clock) {
    runner::RunRequest req;
    req.experiment_name = plan.experiment_name;
    req.command = plan.command;
    req.params = plan.params;
    req.determinism_note = plan.determinism_note;

    ReplayOutcome outcome;
    if (const auto* remote = std::get_if<RemoteSource>(&plan.source)) {
        const fs::path dir = cache_key_dir(cache_root, *remote);
        CacheLock lock(fs::path(dir.string() + ".lock"));
        vcs::CodeRef ref;
        std::error_code ec;
        if (fs::exists(dir / ".git", ec)) {
            checkout_commit(dir, remote->commit_id);
            ref = vcs::commit_ref(remote->commit_id, remote->repo_url);
        } else {
            fs::remove_all(dir, ec);
            try {
                ref = materialize(plan, dir);
            } catch (...) {
                fs::remove_all(dir, ec);
                throw;
            }
        }
        fs::create_directories(run_dir, ec);
        if (ec) fail(Errc::IoFailure, run_dir.string() + ": " + ec.message());
        req.workdir = dir;
        outcome.code_dir = dir;
        outcome.run = runner::execute_with_seed(req, run_dir, ref, plan.seed, plan.seed_origin, clock);
        return outcome;
    }
    const fs::path code = run_dir / "code";
    const auto ref = materialize(plan, code);
    req.workdir = code;
    outcome.code_dir = code;
    outcome.run = runner::execute_with_seed(req, run_dir, ref, plan.seed, plan.seed_origin, clock);
    return outcome;
}

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::exact: return "exact";
        case Verdict::metric_equal: return "metric_equal";
        case Verdict::divergent: return "divergent";
        case Verdict::failed: return "failed";
    }
    return "failed";
}

bool within_tolerance(double a, double b, double tol) {
    if (a == b) return true;
    if (!std::isfinite(a) || !std::isfinite(b)) return false;
    return std::fabs(a - b) <= tol * std::max(std::fabs(a), std::fabs(b));
}

namespace {

std::string params_text(const ParamList& params) {
    ordered_json j = ordered_json::array();
    for (const auto& [k, v] : params) j.push_back({k, v});
    return j.dump();
}

using ScalarKey = std::pair<std::uint64_t, std::string>;

std::map<ScalarKey, double> scalar_points(const std::vector<events::EventRecord>& records) {
    std::map<ScalarKey, double> out;
    for (const auto& r : records)
        if (const auto* v = std::get_if<double>(&r.payload)) out[{r.step, r.tag}] = *v;
    return out;
}

}  // namespace

ReproductionReport verify_reproduction(const fs::path& original_run_dir, const fs::path& replay_run_dir,
                                       double tolerance) {
    const auto a = load_manifest(original_run_dir / "manifest.json");
    const auto b = load_manifest(replay_run_dir / "manifest.json");

    ReproductionReport rep;
    rep.tolerance = tolerance;
    if (a.params != b.params) rep.manifest_diff.push_back({"params", params_text(a.params), params_text(b.params)});
    if (a.seed != b.seed) rep.manifest_diff.push_back({"seed", std::to_string(a.seed), std::to_string(b.seed)});
    if (a.status != b.status)
        rep.manifest_diff.push_back({"status", std::string(to_string(a.status)), std::string(to_string(b.status))});

    std::vector<events::EventRecord> ea, eb;
    try {
        ea = events::read_events(original_run_dir / "events.jsonl").records;
        eb = events::read_events(replay_run_dir / "events.jsonl").records;
    } catch (const Error& e) {
        if (e.code() != Errc::CorruptLog) throw;
        rep.manifest_diff.push_back({"events", "", e.what()});
    }
    rep.event_digest_original = events::event_digest(ea);
    rep.event_digest_replay = events::event_digest(eb);

    if (!rep.manifest_diff.empty()) {
        rep.verdict = Verdict::failed;
        return rep;
    }
    if (rep.event_digest_original == rep.event_digest_replay) {
        rep.verdict = Verdict::exact;
        return rep;
    }

    const auto pa = scalar_points(ea);
    const auto pb = scalar_points(eb);
    auto ia = pa.begin();
    auto ib = pb.begin();
    while (ia != pa.end() || ib != pb.end()) {
        if (ib == pb.end() || (ia != pa.end() && ia->first < ib->first)) {
            rep.first_divergence = Divergence{ia->first.second, ia->first.first, ia->second, std::nullopt};
            break;
        }
        if (ia == pa.end() || ib->first < ia->first) {
            rep.first_divergence = Divergence{ib->first.second, ib->first.first, std::nullopt, ib->second};
            break;
        }
        if (!within_tolerance(ia->second, ib->second, tolerance)) {
            rep.first_divergence = Divergence{ia->first.second, ia->first.first, ia->second, ib->second};
            break;
        }
        ++ia;
        ++ib;
    }
    rep.verdict = rep.first_divergence ? Verdict::divergent : Verdict::metric_equal;
    return rep;
}

std::string report_to_json(const ReproductionReport& r) {
    ordered_json j;
    j["verdict"] = std::string(to_string(r.verdict));
    j["manifest_diff"] = ordered_json::array();
    for (const auto& d : r.manifest_diff)
        j["manifest_diff"].push_back({{"field", d.field}, {"original", d.original}, {"replay", d.replay}});
    if (r.first_divergence) {
        const auto& d = *r.first_divergence;
        ordered_json fd;
        fd["tag"] = d.tag;
        fd["step"] = d.step;
        fd["original"] = d.original ? ordered_json(*d.original) : ordered_json(nullptr);
        fd["replay"] = d.replay ? ordered_json(*d.replay) : ordered_json(nullptr);
        j["first_divergence"] = fd;
    } else {
        j["first_divergence"] = nullptr;
    }
    j["event_digest_original"] = r.event_digest_original;
    j["event_digest_replay"] = r.event_digest_replay;
    j["tolerance"] = r.tolerance;
    return j.dump(2) + "\n";
}

std::string report_summary(const ReproductionReport& r) {
    std::ostringstream os;
    os << "verdict: " << to_string(r.verdict) << "\n";
    os << "event digest original: " << r.event_digest_original << "\n";
    os << "event digest replay:   " << r.event_digest_replay << "\n";
    for (const auto& d : r.manifest_diff)
        os << "differs: " << d.field << ": " << d.original << " -> " << d.replay << "\n";
    if (r.first_divergence) {
        const auto& d = *r.first_divergence;
        auto show = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("missing"); };
        os << "first divergence: tag " << d.tag << " step " << d.step << ": " << show(d.original) << " vs "
           << show(d.replay) << "\n";
    }
    return os.str();
}

}  // namespace repro::replay
