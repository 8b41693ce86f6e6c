#include "repro/runner.hpp"

#include "repro/error.hpp"
#include "repro/events.hpp"
#include "repro/process.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <exception>
#include <iostream>
#include <mutex>
#include <thread>

namespace repro::runner {

fs::path prepare_run_dir(const fs::path& base, const std::string& experiment_name, TimePoint started_at,
                         std::uint64_t run_index) {
    if (experiment_name.empty()) fail(Errc::EmptyExperimentName);
    const fs::path batch = base / experiment_name / format_compact(started_at);
    const fs::path dir = batch / ("run-" + std::to_string(run_index));
    std::error_code ec;
    fs::create_directories(batch, ec);
    if (ec) fail(Errc::IoFailure, batch.string() + ": " + ec.message());
    // create_directory reports false when the directory already existed.
    const bool created = fs::create_directory(dir, ec);
    if (ec) fail(Errc::IoFailure, dir.string() + ": " + ec.message());
    if (!created) fail(Errc::Collision, dir.string());
    return dir;
}

CodeSource resolve_code(const vcs::Repository& repo, bool allow_dirty, const fs::path& base_dir,
                        const std::vector<std::string>& extra_ignore) {
    const auto state = repo.inspect();
    const auto decision = vcs::enforce_clean(state, allow_dirty);
    CodeSource source;
    if (const auto* use = std::get_if<vcs::UseCommit>(&decision)) {
        source.commit = use->ref;
        return source;
    }
    source.snapshot_root = repo.root();
    source.ignore_rules = vcs::default_ignore_rules("");
    std::error_code ec;
    const auto rel = fs::weakly_canonical(fs::absolute(base_dir), ec)
                         .lexically_relative(fs::weakly_canonical(repo.root(), ec));
    if (!rel.empty() && *rel.begin() != "..") source.ignore_rules.push_back(rel.generic_string());
    source.ignore_rules.insert(source.ignore_rules.end(), extra_ignore.begin(), extra_ignore.end());
    return source;
}

CodeSource resolve_code(const RunRequest& req) {
    const fs::path workdir = req.workdir.empty() ? fs::current_path() : req.workdir;
    try {
        vcs::GitRepository repo(workdir, {fs::absolute(req.base_dir)});
        return resolve_code(repo, req.allow_dirty, req.base_dir, req.ignore_rules);
    } catch (const Error& e) {
        if (e.code() != Errc::NotARepository || !req.allow_dirty) throw;
    }
    CodeSource source;
    source.snapshot_root = workdir;
    source.ignore_rules = vcs::default_ignore_rules("");
    std::error_code ec;
    const auto rel = fs::weakly_canonical(fs::absolute(req.base_dir), ec)
                         .lexically_relative(fs::weakly_canonical(workdir, ec));
    if (!rel.empty() && *rel.begin() != "..") source.ignore_rules.push_back(rel.generic_string());
    source.ignore_rules.insert(source.ignore_rules.end(), req.ignore_rules.begin(), req.ignore_rules.end());
    return source;
}

vcs::CodeRef materialize_code_ref(const CodeSource& source, const fs::path& run_dir) {
    if (source.commit) return *source.commit;
    return vcs::snapshot_code(source.snapshot_root, run_dir / "code", source.ignore_rules, run_dir);
}

std::vector<std::string> resolve_command(const std::vector<std::string>& command) {
    static const std::vector<std::string> builtins{"demo-train"};
    if (!command.empty() && std::find(builtins.begin(), builtins.end(), command[0]) != builtins.end()) {
        std::vector<std::string> out{process::self_executable().string()};
        out.insert(out.end(), command.begin(), command.end());
        return out;
    }
    return command;
}

RunResult execute_with_seed(const RunRequest& req, const fs::path& run_dir, const vcs::CodeRef& code_ref,
                            std::uint64_t seed, seedctl::SeedOrigin origin, const Clock& clock) {
    if (req.command.empty()) fail(Errc::MissingRequired, "command");
    const fs::path abs_run_dir = fs::absolute(run_dir);
    const fs::path manifest_path = abs_run_dir / "manifest.json";
    const fs::path events_path = abs_run_dir / "events.jsonl";

    RunManifest m = create_manifest(req.experiment_name, req.params, code_ref, seed, origin,
                                    current_environment(req.determinism_note), clock);
    m.command = req.command;
    m.status = RunStatus::running;
    store_manifest(manifest_path, m);
    if (!fs::exists(events_path)) write_file_atomic(events_path, "");

    process::SpawnOptions opts;
    opts.cwd = req.workdir;
    opts.env_overrides = {{"RUN_SEED", std::to_string(seed)},
                          {"RUN_DIR", abs_run_dir.string()},
                          {"RUN_MANIFEST", manifest_path.string()}};
    opts.stdout_path = abs_run_dir / "stdout.log";
    opts.stderr_path = abs_run_dir / "stderr.log";

    const auto start = std::chrono::steady_clock::now();
    auto elapsed_ms = [&] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
            .count();
    };
    int exit_code = 0;
    try {
        exit_code = process::run_to_files(resolve_command(req.command), opts);
    } catch (const Error& e) {
        if (e.code() == Errc::SpawnFailure)
            store_manifest(manifest_path, finalize_manifest(m, 127, elapsed_ms(), {}));
        throw;
    }
    const auto duration = elapsed_ms();

    std::map<std::string, double> summary;
    try {
        summary = events::last_scalars(events::read_events(events_path).records);
    } catch (const Error& e) {
        std::cerr << "warning: " << events_path.string() << ": " << e.what() << "\n";
    }
    RunResult result;
    result.run_dir = run_dir;
    result.manifest = finalize_manifest(m, exit_code, duration, std::move(summary));
    result.exit_code = exit_code;
    result.duration_ms = duration;
    store_manifest(manifest_path, result.manifest);
    return result;
}

RunResult execute(const RunRequest& req, std::uint64_t run_index, const fs::path& run_dir,
                  const vcs::CodeRef& code_ref, const seedctl::RootSeed& root, const Clock& clock) {
    const auto seed = seedctl::derive_subseed(root, "run/" + std::to_string(run_index));
    return execute_with_seed(req, run_dir, code_ref, seed, root.origin, clock);
}

namespace {

struct BatchLedger {
    std::mutex mu;
    fs::path path;
    nlohmann::ordered_json doc;

    void mark(const RunResult& r, std::uint64_t index) {
        std::lock_guard lock(mu);
        auto& entry = doc["runs"][index];
        entry["seed"] = r.manifest.seed;
        entry["status"] = std::string(to_string(r.manifest.status));
        entry["exit_code"] = r.exit_code;
        doc["completed"].push_back(index);
        auto sorted = doc["completed"].get<std::vector<std::uint64_t>>();
        std::sort(sorted.begin(), sorted.end());
        doc["completed"] = sorted;
        write_file_atomic(path, doc.dump(2) + "\n");
    }
};

}  // namespace

BatchResult multi_run(const RunRequest& req, const Clock& clock, const seedctl::EntropySource& entropy) {
    if (req.multi_run < 1) fail(Errc::BadValue, "multi_run must be >= 1");
    if (req.command.empty()) fail(Errc::MissingRequired, "command");
    const CodeSource code = resolve_code(req);
    return multi_run(req, code, clock, entropy);
}

BatchResult multi_run(const RunRequest& req, const CodeSource& code, const Clock& clock,
                      const seedctl::EntropySource& entropy) {
    if (req.multi_run < 1) fail(Errc::BadValue, "multi_run must be >= 1");
    if (req.command.empty()) fail(Errc::MissingRequired, "command");
    BatchResult batch;
    batch.root = seedctl::resolve_seed(req.user_seed, entropy);
    const TimePoint started = clock();
    const std::uint64_t n = req.multi_run;

    std::vector<fs::path> dirs;
    for (std::uint64_t i = 0; i < n; ++i) dirs.push_back(prepare_run_dir(req.base_dir, req.experiment_name, started, i));
    batch.batch_dir = dirs.front().parent_path();

    BatchLedger ledger;
    ledger.path = batch.batch_dir / "batch.json";
    ledger.doc["experiment_name"] = req.experiment_name;
    ledger.doc["root_seed"] = batch.root.value;
    ledger.doc["seed_origin"] = std::string(to_string(batch.root.origin));
    ledger.doc["created_at"] = format_rfc3339(started);
    ledger.doc["runs"] = nlohmann::ordered_json::array();
    for (std::uint64_t i = 0; i < n; ++i) {
        nlohmann::ordered_json entry;
        entry["index"] = i;
        entry["run_dir"] = dirs[i].filename().string();
        entry["seed"] = seedctl::derive_subseed(batch.root, "run/" + std::to_string(i));
        entry["status"] = "pending";
        entry["exit_code"] = nullptr;
        ledger.doc["runs"].push_back(std::move(entry));
    }
    ledger.doc["completed"] = nlohmann::ordered_json::array();
    write_file_atomic(ledger.path, ledger.doc.dump(2) + "\n");

    std::vector<std::optional<RunResult>> results(n);
    std::vector<std::exception_ptr> errors(n);
    auto run_one = [&](std::uint64_t i) {
        try {
            const auto ref = materialize_code_ref(code, dirs[i]);
            results[i] = execute(req, i, dirs[i], ref, batch.root, clock);
            ledger.mark(*results[i], i);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };

    const std::uint64_t workers = std::clamp<std::uint64_t>(req.parallel, 1, n);
    if (workers == 1) {
        for (std::uint64_t i = 0; i < n; ++i) {
            run_one(i);
            if (errors[i]) break;
        }
    } else {
        std::atomic<std::uint64_t> next{0};
        std::vector<std::thread> pool;
        for (std::uint64_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (auto i = next.fetch_add(1); i < n; i = next.fetch_add(1)) run_one(i);
            });
        }
        for (auto& t : pool) t.join();
    }

    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    for (auto& r : results) batch.runs.push_back(std::move(*r));
    return batch;
}

std::vector<fs::path> list_run_dirs(const fs::path& batch_dir) {
    std::vector<std::pair<std::uint64_t, fs::path>> found;
    std::error_code ec;
    if (!fs::is_directory(batch_dir, ec)) return {};
    for (const auto& e : fs::directory_iterator(batch_dir, ec)) {
        const auto name = e.path().filename().string();
        if (!e.is_directory() || name.rfind("run-", 0) != 0) continue;
        if (auto idx = parse_u64(std::string_view(name).substr(4)); idx && fs::exists(e.path() / "manifest.json"))
            found.emplace_back(*idx, e.path());
    }
    std::sort(found.begin(), found.end());
    std::vector<fs::path> out;
    for (auto& [i, p] : found) out.push_back(p);
    return out;
}

}  // namespace repro::runner
