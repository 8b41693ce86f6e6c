#include "repro/vcs_gate.hpp"

#include "repro/error.hpp"
#include "repro/process.hpp"
#include "repro/util.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <system_error>

namespace repro::vcs {

CodeRef commit_ref(std::string commit_id, std::string repo_url) {
    CodeRef ref;
    ref.kind = CodeKind::commit;
    ref.commit_id = std::move(commit_id);
    ref.repo_url = std::move(repo_url);
    return ref;
}

bool code_ref_valid(const CodeRef& ref) {
    if (ref.kind == CodeKind::commit) {
        return ref.commit_id && is_lower_hex(*ref.commit_id, 40) && !ref.snapshot_hash &&
               !ref.snapshot_path;
    }
    return ref.snapshot_hash && is_lower_hex(*ref.snapshot_hash, 64) && ref.snapshot_path &&
           !ref.snapshot_path->empty() && !ref.commit_id;
}

namespace {

process::Output git(const std::vector<std::string>& args) {
    std::vector<std::string> argv{"git"};
    argv.insert(argv.end(), args.begin(), args.end());
    try {
        return process::run_capture(argv);
    } catch (const Error& e) {
        if (e.code() == Errc::SpawnFailure) fail(Errc::VcsToolUnavailable, e.detail());
        throw;
    }
}

std::string trim_newline(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

}  // namespace

GitRepository::GitRepository(const fs::path& path, std::vector<fs::path> excluded) {
    std::error_code ec;
    if (!fs::is_directory(path, ec)) fail(Errc::NotARepository, path.string());
    auto top = git({"-C", path.string(), "rev-parse", "--show-toplevel"});
    if (top.exit_code != 0) fail(Errc::NotARepository, path.string());
    root_ = fs::path(trim_newline(top.out));

    const fs::path canon_root = fs::weakly_canonical(root_, ec);
    for (const auto& ex : excluded) {
        fs::path rel = ex;
        if (ex.is_absolute()) {
            rel = fs::weakly_canonical(ex, ec).lexically_relative(canon_root);
            if (rel.empty() || *rel.begin() == "..") continue;
        }
        if (rel.empty() || rel == ".") continue;
        exclude_specs_.push_back(":(exclude)" + rel.generic_string());
    }
}

RepoState GitRepository::inspect() const {
    RepoState state;
    auto head = git({"-C", root_.string(), "rev-parse", "--verify", "HEAD"});
    if (head.exit_code != 0) fail(Errc::NotARepository, root_.string() + " has no commits");
    state.head_commit = trim_newline(head.out);

    std::vector<std::string> status_args{"-C", root_.string(), "status", "--porcelain=v1", "-z",
                                         "--untracked-files=all"};
    if (!exclude_specs_.empty()) {
        status_args.emplace_back("--");
        status_args.emplace_back(".");
        status_args.insert(status_args.end(), exclude_specs_.begin(), exclude_specs_.end());
    }
    auto status = git(status_args);
    if (status.exit_code != 0) fail(Errc::NotARepository, trim_newline(status.err));

    // Records are "XY path\0", renames/copies carry an extra "orig\0".
    const std::string& out = status.out;
    std::size_t pos = 0;
    while (pos < out.size()) {
        auto end = out.find('\0', pos);
        if (end == std::string::npos) end = out.size();
        std::string rec = out.substr(pos, end - pos);
        pos = end + 1;
        if (rec.size() < 4) continue;
        const char x = rec[0];
        state.changed_paths.push_back(rec.substr(3));
        if (x == 'R' || x == 'C') {
            auto skip = out.find('\0', pos);
            pos = skip == std::string::npos ? out.size() : skip + 1;
        }
    }
    state.is_dirty = !state.changed_paths.empty();

    auto url = git({"-C", root_.string(), "config", "--get", "remote.origin.url"});
    if (url.exit_code == 0) state.repo_url = trim_newline(url.out);
    return state;
}

RepoState inspect_repository(const fs::path& path, const std::vector<fs::path>& excluded) {
    return GitRepository(path, excluded).inspect();
}

GateDecision enforce_clean(const RepoState& state, bool allow_dirty) {
    if (!state.is_dirty) return UseCommit{commit_ref(state.head_commit, state.repo_url)};
    if (allow_dirty) return RequireSnapshot{};
    std::string listing;
    for (const auto& p : state.changed_paths) {
        if (!listing.empty()) listing += ", ";
        listing += p;
    }
    fail(Errc::DirtyWorktree, "uncommitted changes: " + listing +
                                  " (commit them or pass --allow-dirty)");
}

std::vector<std::string> default_ignore_rules(const std::string& output_dir_name) {
    std::vector<std::string> rules{".git", "__pycache__", "*.pyc", "*.pyo"};
    if (!output_dir_name.empty()) rules.push_back(output_dir_name);
    return rules;
}

bool is_ignored(const std::string& relpath, const std::vector<std::string>& rules) {
    for (std::string rule : rules) {
        while (!rule.empty() && rule.back() == '/') rule.pop_back();
        if (rule.empty()) continue;
        const bool has_slash = rule.find('/') != std::string::npos;
        std::size_t start = 0;
        for (;;) {
            const auto slash = relpath.find('/', start);
            const std::string prefix = relpath.substr(0, slash);
            if (fnmatch(rule.c_str(), prefix.c_str(), 0) == 0) return true;
            if (!has_slash) {
                const std::string component = relpath.substr(start, slash - start);
                if (fnmatch(rule.c_str(), component.c_str(), 0) == 0) return true;
            }
            if (slash == std::string::npos) break;
            start = slash + 1;
        }
    }
    return false;
}

std::string snapshot_hash(std::vector<SnapshotEntry> entries) {
    std::sort(entries.begin(), entries.end(),
              [](const SnapshotEntry& a, const SnapshotEntry& b) { return a.relpath < b.relpath; });
    Sha256 h;
    for (const auto& e : entries) {
        h.update(e.relpath);
        h.update("\n");
        h.update(e.content_sha256);
        h.update("\n");
    }
    return h.hex_digest();
}

namespace {

// Regular, non-ignored files under root; relpaths use '/'.
std::vector<std::string> list_files(const fs::path& root, const std::vector<std::string>& rules,
                                    const fs::path& skip_dir) {
    std::error_code ec;
    const fs::path canon_skip = skip_dir.empty() ? fs::path{} : fs::weakly_canonical(skip_dir, ec);
    std::vector<std::string> files;
    fs::recursive_directory_iterator it(root, fs::directory_options::none, ec);
    if (ec) fail(Errc::IoFailure, root.string() + ": " + ec.message());
    for (; it != fs::recursive_directory_iterator(); it.increment(ec)) {
        if (ec) fail(Errc::IoFailure, root.string() + ": " + ec.message());
        const auto rel = it->path().lexically_relative(root).generic_string();
        const auto st = it->symlink_status(ec);
        if (fs::is_directory(st)) {
            if (is_ignored(rel, rules) ||
                (!canon_skip.empty() && fs::weakly_canonical(it->path(), ec) == canon_skip))
                it.disable_recursion_pending();
            continue;
        }
        if (!fs::is_regular_file(st) || is_ignored(rel, rules)) continue;
        files.push_back(rel);
    }
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace

std::string hash_tree(const fs::path& root, const std::vector<std::string>& ignore_rules) {
    std::vector<SnapshotEntry> entries;
    for (auto& rel : list_files(root, ignore_rules, {}))
        entries.push_back({rel, sha256_file_hex(root / rel)});
    return snapshot_hash(std::move(entries));
}

CodeRef snapshot_code(const fs::path& src, const fs::path& dest,
                      const std::vector<std::string>& ignore_rules, const fs::path& relative_to) {
    std::error_code ec;
    if (!fs::is_directory(src, ec)) fail(Errc::IoFailure, src.string() + ": not a directory");
    if (fs::exists(dest, ec)) {
        if (!fs::is_directory(dest, ec) || !fs::is_empty(dest, ec))
            fail(Errc::DestinationNotEmpty, dest.string());
    }
    fs::create_directories(dest, ec);
    if (ec) fail(Errc::IoFailure, dest.string() + ": " + ec.message());

    std::vector<SnapshotEntry> entries;
    for (auto& rel : list_files(src, ignore_rules, dest)) {
        const fs::path target = dest / rel;
        fs::create_directories(target.parent_path(), ec);
        if (ec) fail(Errc::IoFailure, target.string() + ": " + ec.message());
        fs::copy_file(src / rel, target, fs::copy_options::overwrite_existing, ec);
        if (ec) fail(Errc::IoFailure, (src / rel).string() + ": " + ec.message());
        // Hash the copy so the recorded digest describes what was stored.
        entries.push_back({rel, sha256_file_hex(target)});
    }

    CodeRef ref;
    ref.kind = CodeKind::snapshot;
    ref.snapshot_hash = snapshot_hash(std::move(entries));
    ref.snapshot_path = relative_to.empty() ? dest.filename().generic_string()
                                            : dest.lexically_relative(relative_to).generic_string();
    return ref;
}

}  // namespace repro::vcs
