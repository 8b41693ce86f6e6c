#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace repro::vcs {

namespace fs = std::filesystem;

struct RepoState {
    std::string repo_url;     // origin remote; may be empty
    std::string head_commit;  // 40 lowercase hex
    bool is_dirty = false;
    std::vector<std::string> changed_paths;
};

enum class CodeKind { commit, snapshot };

struct CodeRef {
    CodeKind kind = CodeKind::commit;
    std::optional<std::string> commit_id;
    std::optional<std::string> repo_url;
    std::optional<std::string> snapshot_hash;
    std::optional<std::string> snapshot_path;

    friend bool operator==(const CodeRef&, const CodeRef&) = default;
};

CodeRef commit_ref(std::string commit_id, std::string repo_url);
bool code_ref_valid(const CodeRef& ref);

// Adapter over the version-control tool so tests can substitute a fake.
class Repository {
public:
    virtual ~Repository() = default;
    virtual RepoState inspect() const = 0;
    virtual fs::path root() const = 0;
};

// Backed by the `git` executable:
//   git -C <path> rev-parse --show-toplevel
//   git -C <root> rev-parse --verify HEAD
//   git -C <root> status --porcelain=v1 -z --untracked-files=all [-- . :(exclude)<p>...]
//   git -C <root> config --get remote.origin.url
class GitRepository final : public Repository {
public:
    // Throws NotARepository / VcsToolUnavailable. Paths under any of
    // `excluded` (relative to the repo root or absolute) never make the tree dirty.
    explicit GitRepository(const fs::path& path, std::vector<fs::path> excluded = {});

    RepoState inspect() const override;
    fs::path root() const override { return root_; }

private:
    fs::path root_;
    std::vector<std::string> exclude_specs_;
};

RepoState inspect_repository(const fs::path& path, const std::vector<fs::path>& excluded = {});

struct UseCommit {
    CodeRef ref;
};
struct RequireSnapshot {};
using GateDecision = std::variant<UseCommit, RequireSnapshot>;

// Throws DirtyWorktree when dirty and not overridden.
GateDecision enforce_clean(const RepoState& state, bool allow_dirty);

std::vector<std::string> default_ignore_rules(const std::string& output_dir_name = "runs");

// True when the '/'-separated relative path matches any rule, either against
// the full path or against one of its components.
bool is_ignored(const std::string& relpath, const std::vector<std::string>& rules);

struct SnapshotEntry {
    std::string relpath;
    std::string content_sha256;
};

// SHA-256 over (relpath LF content-sha256-hex LF)* sorted bytewise by relpath.
std::string snapshot_hash(std::vector<SnapshotEntry> entries);

// Hashes every non-ignored regular file under `root` without copying.
std::string hash_tree(const fs::path& root, const std::vector<std::string>& ignore_rules = {});

// Copies non-ignored regular files; returns kind=snapshot with
// snapshot_path = dest relative to `relative_to` (or dest's filename).
CodeRef snapshot_code(const fs::path& src, const fs::path& dest,
                      const std::vector<std::string>& ignore_rules,
                      const fs::path& relative_to = {});

}  // namespace repro::vcs
