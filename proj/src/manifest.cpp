#include "repro/manifest.hpp"

#include "repro/error.hpp"

#include <json.hpp>

#include <sys/utsname.h>
#include <unistd.h>

#include <array>
#include <set>

namespace repro {

using ojson = nlohmann::ordered_json;
using nlohmann::json;

EnvFingerprint current_environment(std::string determinism_note) {
    EnvFingerprint env;
    utsname u{};
    if (uname(&u) == 0) env.os_name = std::string(u.sysname) + " " + u.release;
    if (env.os_name.empty()) env.os_name = "unknown";
    char host[256] = {};
    if (gethostname(host, sizeof host - 1) == 0 && host[0] != '\0')
        env.hostname = host;
    else
        env.hostname = "unknown";
    env.tool_version = std::string(kToolVersion);
    env.determinism_note = std::move(determinism_note);
    return env;
}

std::string_view to_string(RunStatus s) {
    switch (s) {
        case RunStatus::pending: return "pending";
        case RunStatus::running: return "running";
        case RunStatus::succeeded: return "succeeded";
        case RunStatus::failed: return "failed";
    }
    return "pending";
}

std::string_view to_string(seedctl::SeedOrigin o) {
    return o == seedctl::SeedOrigin::user ? "user" : "generated";
}

namespace {

std::string duplicate_param(const ParamList& params) {
    std::set<std::string> seen;
    for (const auto& [name, value] : params)
        if (!seen.insert(name).second) return name;
    return {};
}

}  // namespace

std::string manifest_violation(const RunManifest& m) {
    if (m.schema_version != kManifestSchemaVersion) return "schema_version";
    if (m.experiment_name.empty()) return "experiment_name is empty";
    if (auto dup = duplicate_param(m.params); !dup.empty()) return "duplicate param " + dup;
    if (!vcs::code_ref_valid(m.code_ref)) return "code_ref fields inconsistent with kind";
    if (m.env.os_name.empty() || m.env.tool_version.empty() || m.env.hostname.empty())
        return "env fields must be non-empty";
    switch (m.status) {
        case RunStatus::pending:
        case RunStatus::running:
            if (m.exit_code || m.duration_ms) return "unfinished run carries an outcome";
            break;
        case RunStatus::succeeded:
            if (!m.exit_code || *m.exit_code != 0) return "succeeded requires exit_code 0";
            break;
        case RunStatus::failed:
            if (!m.exit_code || *m.exit_code == 0) return "failed requires nonzero exit_code";
            break;
    }
    if (m.duration_ms && *m.duration_ms < 0) return "negative duration_ms";
    return {};
}

RunManifest create_manifest(std::string experiment_name, ParamList params, vcs::CodeRef code_ref,
                            std::uint64_t seed, seedctl::SeedOrigin seed_origin, EnvFingerprint env,
                            const Clock& clock) {
    if (experiment_name.empty()) fail(Errc::EmptyExperimentName);
    if (auto dup = duplicate_param(params); !dup.empty()) fail(Errc::DuplicateParam, dup);
    RunManifest m;
    m.experiment_name = std::move(experiment_name);
    m.params = std::move(params);
    m.code_ref = std::move(code_ref);
    m.seed = seed;
    m.seed_origin = seed_origin;
    m.env = std::move(env);
    m.created_at = clock();
    m.status = RunStatus::pending;
    return m;
}

namespace {

ojson optional_string(const std::optional<std::string>& v) {
    return v ? ojson(*v) : ojson(nullptr);
}

}  // namespace

std::string serialize_manifest(const RunManifest& m) {
    ojson code;
    code["kind"] = m.code_ref.kind == vcs::CodeKind::commit ? "commit" : "snapshot";
    code["commit_id"] = optional_string(m.code_ref.commit_id);
    code["repo_url"] = optional_string(m.code_ref.repo_url);
    code["snapshot_hash"] = optional_string(m.code_ref.snapshot_hash);
    code["snapshot_path"] = optional_string(m.code_ref.snapshot_path);

    ojson params = ojson::array();
    for (const auto& [name, value] : m.params) params.push_back(ojson::array({name, value}));

    ojson env;
    env["os_name"] = m.env.os_name;
    env["tool_version"] = m.env.tool_version;
    env["hostname"] = m.env.hostname;
    env["determinism_note"] = m.env.determinism_note;

    ojson summary = ojson::object();
    for (const auto& [tag, value] : m.metrics_summary) summary[tag] = value;

    ojson doc;
    doc["schema_version"] = m.schema_version;
    doc["experiment_name"] = m.experiment_name;
    doc["code_ref"] = std::move(code);
    doc["params"] = std::move(params);
    doc["seed"] = m.seed;
    doc["seed_origin"] = std::string(to_string(m.seed_origin));
    doc["env"] = std::move(env);
    doc["created_at"] = format_rfc3339(m.created_at);
    doc["status"] = std::string(to_string(m.status));
    doc["exit_code"] = m.exit_code ? ojson(*m.exit_code) : ojson(nullptr);
    doc["duration_ms"] = m.duration_ms ? ojson(*m.duration_ms) : ojson(nullptr);
    doc["metrics_summary"] = std::move(summary);
    doc["command"] = m.command;
    return doc.dump() + "\n";
}

namespace {

[[noreturn]] void malformed(const std::string& why) { fail(Errc::MalformedManifest, why); }

void expect_keys(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
    if (!obj.is_object()) malformed(where + " is not an object");
    if (obj.size() != keys.size()) malformed(where + " has unexpected key set");
    for (const char* k : keys)
        if (!obj.contains(k)) malformed(where + " missing key " + k);
}

std::string get_string(const json& obj, const char* key) {
    const auto& v = obj.at(key);
    if (!v.is_string()) malformed(std::string(key) + " must be a string");
    return v.get<std::string>();
}

std::optional<std::string> get_optional_string(const json& obj, const char* key) {
    const auto& v = obj.at(key);
    if (v.is_null()) return std::nullopt;
    if (!v.is_string()) malformed(std::string(key) + " must be a string or null");
    return v.get<std::string>();
}

std::optional<std::int64_t> get_optional_int(const json& obj, const char* key) {
    const auto& v = obj.at(key);
    if (v.is_null()) return std::nullopt;
    if (!v.is_number_integer()) malformed(std::string(key) + " must be an integer or null");
    return v.get<std::int64_t>();
}

}  // namespace

RunManifest parse_manifest(std::string_view bytes) {
    json doc;
    try {
        doc = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        malformed(e.what());
    }
    if (!doc.is_object()) malformed("top level is not an object");
    if (!doc.contains("schema_version") || !doc["schema_version"].is_number_integer())
        malformed("missing schema_version");
    const auto version = doc["schema_version"].get<std::int64_t>();
    if (version != kManifestSchemaVersion)
        fail(Errc::SchemaVersionUnsupported, std::to_string(version));

    expect_keys(doc,
                {"schema_version", "experiment_name", "code_ref", "params", "seed", "seed_origin",
                 "env", "created_at", "status", "exit_code", "duration_ms", "metrics_summary",
                 "command"},
                "manifest");

    RunManifest m;
    m.schema_version = static_cast<int>(version);
    m.experiment_name = get_string(doc, "experiment_name");

    const auto& code = doc["code_ref"];
    expect_keys(code, {"kind", "commit_id", "repo_url", "snapshot_hash", "snapshot_path"}, "code_ref");
    const auto kind = get_string(code, "kind");
    if (kind == "commit")
        m.code_ref.kind = vcs::CodeKind::commit;
    else if (kind == "snapshot")
        m.code_ref.kind = vcs::CodeKind::snapshot;
    else
        malformed("code_ref.kind " + kind);
    m.code_ref.commit_id = get_optional_string(code, "commit_id");
    m.code_ref.repo_url = get_optional_string(code, "repo_url");
    m.code_ref.snapshot_hash = get_optional_string(code, "snapshot_hash");
    m.code_ref.snapshot_path = get_optional_string(code, "snapshot_path");

    const auto& params = doc["params"];
    if (!params.is_array()) malformed("params must be an array");
    for (const auto& p : params) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !p[1].is_string())
            malformed("params entries must be [name, value] string pairs");
        m.params.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
    }

    if (!doc["seed"].is_number_unsigned()) malformed("seed must be an unsigned integer");
    m.seed = doc["seed"].get<std::uint64_t>();
    const auto origin = get_string(doc, "seed_origin");
    if (origin == "user")
        m.seed_origin = seedctl::SeedOrigin::user;
    else if (origin == "generated")
        m.seed_origin = seedctl::SeedOrigin::generated;
    else
        malformed("seed_origin " + origin);

    const auto& env = doc["env"];
    expect_keys(env, {"os_name", "tool_version", "hostname", "determinism_note"}, "env");
    m.env.os_name = get_string(env, "os_name");
    m.env.tool_version = get_string(env, "tool_version");
    m.env.hostname = get_string(env, "hostname");
    m.env.determinism_note = get_string(env, "determinism_note");

    auto created = parse_rfc3339(get_string(doc, "created_at"));
    if (!created) malformed("created_at is not RFC 3339 UTC with milliseconds");
    m.created_at = *created;

    const auto status = get_string(doc, "status");
    static constexpr std::array<RunStatus, 4> all{RunStatus::pending, RunStatus::running,
                                                  RunStatus::succeeded, RunStatus::failed};
    bool matched = false;
    for (auto s : all) {
        if (to_string(s) == status) {
            m.status = s;
            matched = true;
        }
    }
    if (!matched) malformed("status " + status);

    m.exit_code = get_optional_int(doc, "exit_code");
    m.duration_ms = get_optional_int(doc, "duration_ms");

    const auto& summary = doc["metrics_summary"];
    if (!summary.is_object()) malformed("metrics_summary must be an object");
    for (const auto& [tag, value] : summary.items()) {
        if (!value.is_number()) malformed("metrics_summary values must be numbers");
        m.metrics_summary[tag] = value.get<double>();
    }

    const auto& command = doc["command"];
    if (!command.is_array()) malformed("command must be an array");
    for (const auto& tok : command) {
        if (!tok.is_string()) malformed("command tokens must be strings");
        m.command.push_back(tok.get<std::string>());
    }

    if (auto why = manifest_violation(m); !why.empty()) malformed(why);
    return m;
}

RunManifest finalize_manifest(const RunManifest& m, std::int64_t exit_code, std::int64_t duration_ms,
                              std::map<std::string, double> metrics_summary) {
    if (m.status != RunStatus::pending && m.status != RunStatus::running)
        fail(Errc::AlreadyFinalized, m.experiment_name);
    RunManifest out = m;
    out.status = exit_code == 0 ? RunStatus::succeeded : RunStatus::failed;
    out.exit_code = exit_code;
    out.duration_ms = duration_ms < 0 ? 0 : duration_ms;
    out.metrics_summary = std::move(metrics_summary);
    return out;
}

ParamList params_from_tokens(const std::vector<std::string>& tokens) {
    ParamList params;
    auto is_flag = [](const std::string& t) { return t.size() > 2 && t.rfind("--", 0) == 0; };
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto& tok = tokens[i];
        if (!is_flag(tok)) continue;
        const auto eq = tok.find('=');
        if (eq != std::string::npos) {
            params.emplace_back(tok.substr(2, eq - 2), tok.substr(eq + 1));
        } else if (i + 1 < tokens.size() && !is_flag(tokens[i + 1])) {
            params.emplace_back(tok.substr(2), tokens[i + 1]);
            ++i;
        } else {
            params.emplace_back(tok.substr(2), "");
        }
    }
    return params;
}

RunManifest load_manifest(const fs::path& path) { return parse_manifest(read_file(path)); }

void store_manifest(const fs::path& path, const RunManifest& m) {
    write_file_atomic(path, serialize_manifest(m));
}

}  // namespace repro
