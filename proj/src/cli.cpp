#include "repro/cli.hpp"

#include "repro/dataprep.hpp"
#include "repro/demo_trainer.hpp"
#include "repro/events.hpp"
#include "repro/hpo.hpp"
#include "repro/manifest.hpp"
#include "repro/replay.hpp"
#include "repro/report.hpp"
#include "repro/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <set>
#include <sstream>

namespace repro::cli {

int exit_code_for(Errc code) {
    switch (code) {
        case Errc::UnknownFlag: return kExitUnknownFlag;
        case Errc::MissingRequired: return kExitMissingRequired;
        case Errc::BadValue: return kExitBadValue;
        case Errc::DirtyWorktree:
        case Errc::NotARepository: return kExitGateRefusal;
        case Errc::MissingCommit:
        case Errc::CommitNotFound:
        case Errc::CloneFailure:
        case Errc::SnapshotHashMismatch: return kExitReplayMismatch;
        default: return kExitError;
    }
}

namespace {

enum class V { text, u64, pos_u64, pos_double, nonneg_double, choice, toggle };

struct FlagSpec {
    std::string name;
    V type = V::text;
    bool required = false;
    std::vector<std::string> choices;

    FlagSpec(std::string n, V t = V::text, bool req = false, std::vector<std::string> ch = {})
        : name(std::move(n)), type(t), required(req), choices(std::move(ch)) {}
};

struct CommandSpec {
    std::string subcommand;
    std::string action;
    std::vector<FlagSpec> flags;
    bool passthrough = false;
};

const std::vector<CommandSpec>& command_table() {
    static const std::vector<CommandSpec> table{
        {"init", "", {{"dir"}, {"base-dir"}}, false},
        {"run",
         "",
         {{"experiment-name", V::text, true},
          {"seed", V::u64},
          {"multi-run", V::pos_u64},
          {"allow-dirty", V::toggle},
          {"parallel", V::pos_u64},
          {"base-dir"},
          {"determinism-note"}},
         true},
        {"replay",
         "",
         {{"from"},
          {"repo"},
          {"commit"},
          {"compare"},
          {"seed", V::u64},
          {"experiment-name"},
          {"out"},
          {"tolerance", V::nonneg_double},
          {"base-dir"}},
         true},
        {"aggregate", "", {{"batch", V::text, true}, {"tag"}, {"out"}}, false},
        {"report", "", {{"batch", V::text, true}, {"out"}}, false},
        {"hpo",
         "init",
         {{"study", V::text, true},
          {"space", V::text, true},
          {"goal", V::choice, false, {"maximize", "minimize"}},
          {"seed", V::u64},
          {"init-random", V::pos_u64},
          {"candidates", V::pos_u64},
          {"xi", V::nonneg_double}},
         false},
        {"hpo",
         "run",
         {{"study", V::text, true},
          {"budget", V::pos_u64, true},
          {"objective", V::text, true},
          {"method", V::choice, false, {"bayes", "random", "grid"}},
          {"grid-resolution", V::pos_u64},
          {"experiment-name"},
          {"allow-dirty", V::toggle},
          {"base-dir"},
          {"leaderboard"}},
         true},
        {"data", "verify", {{"root", V::text, true}}, false},
        {"data", "stats", {{"root", V::text, true}, {"split"}, {"out"}}, false},
        {"data",
         "split",
         {{"root"},
          {"items"},
          {"ratio", V::pos_double, true},
          {"seed", V::u64, true},
          {"stratified", V::toggle},
          {"out", V::text, true}},
         false},
        {"data",
         "toy2d",
         {{"family", V::choice, true, {"xor", "blobs", "spiral", "donut"}},
          {"n", V::pos_u64, true},
          {"seed", V::u64},
          {"out"},
          {"sigma", V::pos_double},
          {"centers"},
          {"turns", V::pos_double},
          {"noise", V::nonneg_double},
          {"r-inner", V::nonneg_double},
          {"r-outer", V::pos_double}},
         false},
        {"demo-train",
         "",
         {{"dataset"},
          {"epochs", V::pos_u64},
          {"lr", V::pos_double},
          {"grid-resolution", V::pos_u64},
          {"seed", V::u64},
          {"out-dir"}},
         false},
    };
    return table;
}

bool has_actions(const std::string& sub) { return sub == "hpo" || sub == "data"; }

void check_value(const FlagSpec& spec, const std::string& value) {
    switch (spec.type) {
        case V::text:
            if (value.empty()) fail(Errc::BadValue, spec.name + ": empty value");
            return;
        case V::toggle: return;
        case V::u64:
            if (!parse_u64(value)) fail(Errc::BadValue, spec.name + ": expected an unsigned 64-bit integer");
            return;
        case V::pos_u64: {
            const auto v = parse_u64(value);
            if (!v || *v == 0) fail(Errc::BadValue, spec.name + ": expected a positive integer");
            return;
        }
        case V::pos_double: {
            const auto v = parse_double(value);
            if (!v || !(*v > 0.0) || !std::isfinite(*v)) fail(Errc::BadValue, spec.name + ": expected a positive number");
            return;
        }
        case V::nonneg_double: {
            const auto v = parse_double(value);
            if (!v || !(*v >= 0.0) || !std::isfinite(*v))
                fail(Errc::BadValue, spec.name + ": expected a non-negative number");
            return;
        }
        case V::choice:
            if (std::find(spec.choices.begin(), spec.choices.end(), value) == spec.choices.end()) {
                std::string allowed;
                for (const auto& c : spec.choices) allowed += (allowed.empty() ? "" : "|") + c;
                fail(Errc::BadValue, spec.name + ": expected one of " + allowed);
            }
            return;
    }
}

}  // namespace

CliInvocation parse_cli(const std::vector<std::string>& args) {
    CliInvocation inv;
    if (args.empty()) fail(Errc::MissingRequired, "subcommand");
    if (args[0] == "--help" || args[0] == "-h" || args[0] == "help") {
        inv.help = true;
        return inv;
    }
    inv.subcommand = args[0];
    std::size_t i = 1;
    const auto& table = command_table();
    if (std::none_of(table.begin(), table.end(), [&](const CommandSpec& c) { return c.subcommand == inv.subcommand; }))
        fail(Errc::UnknownFlag, "unknown subcommand " + inv.subcommand);
    if (has_actions(inv.subcommand)) {
        if (i >= args.size() || args[i].rfind("--", 0) == 0) {
            if (i < args.size() && (args[i] == "--help")) {
                inv.help = true;
                return inv;
            }
            fail(Errc::MissingRequired, "action");
        }
        inv.action = args[i++];
    }
    const auto it = std::find_if(table.begin(), table.end(), [&](const CommandSpec& c) {
        return c.subcommand == inv.subcommand && c.action == inv.action;
    });
    if (it == table.end()) fail(Errc::UnknownFlag, "unknown action " + inv.subcommand + " " + inv.action);
    const CommandSpec& cmd = *it;

    bool saw_separator = false;
    for (; i < args.size(); ++i) {
        const std::string& tok = args[i];
        if (tok == "--") {
            saw_separator = true;
            inv.passthrough.assign(args.begin() + static_cast<std::ptrdiff_t>(i) + 1, args.end());
            break;
        }
        if (tok == "--help" || tok == "-h") {
            inv.help = true;
            continue;
        }
        if (tok.size() <= 2 || tok.rfind("--", 0) != 0) fail(Errc::UnknownFlag, tok);
        std::string name = tok.substr(2);
        std::optional<std::string> inline_value;
        if (const auto eq = name.find('='); eq != std::string::npos) {
            inline_value = name.substr(eq + 1);
            name.resize(eq);
        }
        const auto spec = std::find_if(cmd.flags.begin(), cmd.flags.end(),
                                       [&](const FlagSpec& f) { return f.name == name; });
        if (spec == cmd.flags.end()) fail(Errc::UnknownFlag, "--" + name);
        if (inv.flags.count(name)) fail(Errc::BadValue, name + ": given more than once");
        if (spec->type == V::toggle) {
            if (inline_value) fail(Errc::BadValue, name + ": takes no value");
            inv.flags[name] = "";
            continue;
        }
        std::string value;
        if (inline_value) {
            value = *inline_value;
        } else {
            if (i + 1 >= args.size() || args[i + 1] == "--") fail(Errc::BadValue, name + ": missing value");
            value = args[++i];
        }
        check_value(*spec, value);
        inv.flags[name] = value;
    }
    if (inv.help) return inv;

    if (saw_separator && !cmd.passthrough) fail(Errc::UnknownFlag, "--: this subcommand takes no command");
    for (const auto& f : cmd.flags)
        if (f.required && !inv.flags.count(f.name)) fail(Errc::MissingRequired, f.name);
    if ((inv.subcommand == "run" || (inv.subcommand == "hpo" && inv.action == "run")) && inv.passthrough.empty())
        fail(Errc::MissingRequired, "command");

    if (inv.subcommand == "replay") {
        const bool from = inv.has("from"), repo = inv.has("repo"), commit = inv.has("commit");
        if (from && (repo || commit)) fail(Errc::BadValue, "from: cannot be combined with --repo/--commit");
        if (from && !inv.passthrough.empty()) fail(Errc::BadValue, "from: the command comes from the manifest");
        if (!from && !repo && !commit) fail(Errc::MissingRequired, "from");
        if (!from) {
            if (!repo) fail(Errc::MissingRequired, "repo");
            if (!commit) fail(Errc::MissingRequired, "commit");
            if (inv.passthrough.empty()) fail(Errc::MissingRequired, "command");
            if (!is_lower_hex(inv.flags.at("commit"), 40))
                fail(Errc::BadValue, "commit: expected 40 lowercase hex digits");
        }
    }
    if (inv.subcommand == "data" && inv.action == "split") {
        if (inv.has("root") == inv.has("items")) {
            if (!inv.has("root")) fail(Errc::MissingRequired, "root");
            fail(Errc::BadValue, "root: give either --root or --items, not both");
        }
        if (!(*parse_double(inv.flags.at("ratio")) < 1.0)) fail(Errc::BadValue, "ratio: must be in (0, 1)");
    }
    return inv;
}

std::string usage() {
    return R"(usage: repro-harness <subcommand> [flags] [-- command...]

  init        [--dir D] [--base-dir B]
  run         --experiment-name N [--seed S] [--multi-run N] [--parallel K]
              [--allow-dirty] [--base-dir B] [--determinism-note T] -- command...
  replay      --from RUN_DIR [--out D] [--tolerance T] [--base-dir B]
  replay      --repo URL --commit SHA [--seed S] [--experiment-name N]
              [--compare RUN_DIR] [--out D] [--tolerance T] -- command...
  aggregate   --batch DIR [--tag T] [--out PATH]
  report      --batch DIR [--out DIR]
  hpo init    --study FILE --space FILE [--goal maximize|minimize] [--seed S]
              [--init-random K] [--candidates C] [--xi V]
  hpo run     --study FILE --budget N --objective TAG [--method bayes|random|grid]
              [--grid-resolution R] [--experiment-name N] [--allow-dirty]
              [--base-dir B] [--leaderboard FILE] -- command...
  data verify --root DIR
  data stats  --root DIR [--split S] [--out FILE]
  data split  (--root DIR | --items CSV) --ratio R --seed S [--stratified] --out DIR
  data toy2d  --family xor|blobs|spiral|donut --n N [--seed S] [--out FILE]
              [--sigma V] [--centers x:y;x:y] [--turns V] [--noise V]
              [--r-inner V] [--r-outer V]
  demo-train  [--dataset CSV] [--epochs N] [--lr V] [--grid-resolution R]
              [--seed S] [--out-dir D]

exit codes: 0 ok, 1 error, 2 unknown flag, 3 gate refusal, 4 child failure,
            5 replay mismatch, 6 missing required flag, 7 bad flag value
)";
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

struct TomlCursor {
    std::string_view s;
    std::size_t i = 0;
    int line = 0;

    [[noreturn]] void error(const std::string& what) const {
        fail(Errc::BadValue, std::string(kConfigFile) + " line " + std::to_string(line) + ": " + what);
    }
    void skip_ws() {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    }
    std::string string_value() {
        if (i >= s.size() || s[i] != '"') error("expected a quoted string");
        ++i;
        std::string out;
        while (i < s.size() && s[i] != '"') {
            if (s[i] == '\\' && i + 1 < s.size()) {
                const char c = s[++i];
                out += c == 'n' ? '\n' : c == 't' ? '\t' : c;
            } else {
                out += s[i];
            }
            ++i;
        }
        if (i >= s.size()) error("unterminated string");
        ++i;
        return out;
    }
    void expect_end() {
        skip_ws();
        if (i < s.size() && s[i] != '#') error("unexpected text after value");
    }
};

}  // namespace

Config parse_config(std::string_view text) {
    Config cfg;
    std::set<std::string> seen;
    std::istringstream in{std::string(text)};
    int line_no = 0;
    for (std::string raw; std::getline(in, raw);) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        TomlCursor cur{line, 0, line_no};
        const auto eq = line.find('=');
        if (eq == std::string::npos) cur.error("expected key = value");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        if (!seen.insert(key).second) cur.error("duplicate key " + key);
        cur.i = eq + 1;
        cur.skip_ws();
        if (key == "base_dir") {
            cfg.base_dir = cur.string_value();
            cur.expect_end();
        } else if (key == "ignore") {
            if (cur.i >= line.size() || line[cur.i] != '[') cur.error("expected an array of strings");
            ++cur.i;
            for (;;) {
                cur.skip_ws();
                if (cur.i < line.size() && line[cur.i] == ']') {
                    ++cur.i;
                    break;
                }
                cfg.ignore.push_back(cur.string_value());
                cur.skip_ws();
                if (cur.i < line.size() && line[cur.i] == ',') {
                    ++cur.i;
                    continue;
                }
                if (cur.i < line.size() && line[cur.i] == ']') {
                    ++cur.i;
                    break;
                }
                cur.error("expected , or ]");
            }
            cur.expect_end();
        } else if (key == "tolerance") {
            auto end = line.find_first_of(" \t#", cur.i);
            const auto token = line.substr(cur.i, end == std::string::npos ? std::string::npos : end - cur.i);
            const auto v = parse_double(token);
            if (!v || !(*v >= 0.0) || !std::isfinite(*v)) cur.error("tolerance must be a non-negative number");
            cfg.tolerance = *v;
            cur.i += token.size();
            cur.expect_end();
        } else {
            cur.error("unknown key " + key);
        }
    }
    return cfg;
}

Config load_config(const fs::path& dir) {
    const fs::path path = dir / kConfigFile;
    std::error_code ec;
    if (!fs::exists(path, ec)) return {};
    return parse_config(read_file(path));
}

fs::path resolve_base_dir(const CliInvocation& inv, const Config& config) {
    if (auto it = inv.flags.find("base-dir"); it != inv.flags.end()) return it->second;
    if (const char* env = std::getenv("REPRO_HARNESS_BASE"); env && *env) return env;
    if (config.base_dir) return *config.base_dir;
    return "runs";
}

namespace {

struct Context {
    const CliInvocation& inv;
    Config config;
    std::ostream& out;
    std::ostream& err;

    [[nodiscard]] std::string flag(const std::string& name, const std::string& fallback = {}) const {
        auto it = inv.flags.find(name);
        return it == inv.flags.end() ? fallback : it->second;
    }
    [[nodiscard]] std::optional<std::uint64_t> u64(const std::string& name) const {
        auto it = inv.flags.find(name);
        if (it == inv.flags.end()) return std::nullopt;
        return parse_u64(it->second);
    }
    [[nodiscard]] std::optional<double> real(const std::string& name) const {
        auto it = inv.flags.find(name);
        if (it == inv.flags.end()) return std::nullopt;
        return parse_double(it->second);
    }
    [[nodiscard]] fs::path base_dir() const { return resolve_base_dir(inv, config); }
};

void write_output(const Context& ctx, const std::string& content) {
    if (ctx.inv.has("out")) {
        const fs::path path = ctx.flag("out");
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        write_file_atomic(path, content);
        ctx.out << path.string() << "\n";
    } else {
        ctx.out << content;
    }
}

int cmd_init(Context& ctx) {
    const fs::path dir = ctx.flag("dir", ".");
    fs::create_directories(dir);
    const fs::path cfg = dir / kConfigFile;
    const std::string base = ctx.flag("base-dir", "runs");
    if (fs::exists(cfg)) {
        ctx.out << cfg.string() << " already exists; left unchanged\n";
    } else {
        std::string text = "# repro-harness configuration\n";
        text += "base_dir = \"" + base + "\"\n";
        text += "ignore = []\n";
        text += "tolerance = 1e-6\n";
        write_file_atomic(cfg, text);
        ctx.out << "wrote " << cfg.string() << "\n";
    }
    fs::create_directories(dir / base);
    ctx.out << "next: repro-harness run --experiment-name demo --seed 42 -- demo-train --epochs 100 --lr 0.01\n";
    return kExitOk;
}

int cmd_run(Context& ctx) {
    runner::RunRequest req;
    req.experiment_name = ctx.flag("experiment-name");
    req.command = ctx.inv.passthrough;
    req.params = params_from_tokens(req.command);
    req.base_dir = ctx.base_dir();
    req.allow_dirty = ctx.inv.has("allow-dirty");
    req.multi_run = ctx.u64("multi-run").value_or(1);
    req.parallel = ctx.u64("parallel").value_or(1);
    req.user_seed = ctx.u64("seed");
    req.determinism_note = ctx.flag("determinism-note");
    req.ignore_rules = ctx.config.ignore;

    const auto batch = runner::multi_run(req);
    bool all_ok = true;
    for (const auto& r : batch.runs) {
        ctx.out << r.run_dir.string() << " " << to_string(r.manifest.status) << " exit=" << r.exit_code
                << " seed=" << r.manifest.seed << "\n";
        all_ok = all_ok && r.exit_code == 0;
    }
    ctx.out << "batch " << batch.batch_dir.string() << " root_seed=" << batch.root.value << " ("
            << to_string(batch.root.origin) << ")\n";
    return all_ok ? kExitOk : kExitChildFailure;
}

int cmd_replay(Context& ctx) {
    const fs::path base = ctx.base_dir();
    const double tolerance = ctx.real("tolerance").value_or(ctx.config.tolerance.value_or(replay::kDefaultTolerance));

    replay::ReplayPlan plan;
    fs::path compare_dir;
    if (ctx.inv.has("from")) {
        compare_dir = ctx.flag("from");
        plan = replay::plan_replay(load_manifest(compare_dir / "manifest.json"), compare_dir);
    } else {
        const auto root = seedctl::resolve_seed(ctx.u64("seed"), seedctl::os_entropy());
        plan = replay::plan_replay(ctx.flag("repo"), ctx.flag("commit"), ctx.inv.passthrough, root.value,
                                   root.origin, ctx.flag("experiment-name", "replay"));
        if (ctx.inv.has("compare")) compare_dir = ctx.flag("compare");
    }

    fs::path run_dir;
    if (ctx.inv.has("out")) {
        run_dir = ctx.flag("out");
        if (run_dir.has_parent_path()) fs::create_directories(run_dir.parent_path());
        if (!fs::create_directory(run_dir)) fail(Errc::Collision, run_dir.string());
    } else {
        run_dir = runner::prepare_run_dir(base / "replays", plan.experiment_name, std::chrono::system_clock::now(), 0);
    }
    const auto outcome = replay::execute_replay(plan, run_dir, base / ".replay-cache");
    ctx.out << "replay " << run_dir.string() << " " << to_string(outcome.run.manifest.status)
            << " exit=" << outcome.run.exit_code << "\n";
    if (compare_dir.empty()) return outcome.run.exit_code == 0 ? kExitOk : kExitChildFailure;

    const auto rep = replay::verify_reproduction(compare_dir, run_dir, tolerance);
    write_file_atomic(run_dir / "report.json", replay::report_to_json(rep));
    ctx.out << replay::report_summary(rep);
    const bool ok = rep.verdict == replay::Verdict::exact || rep.verdict == replay::Verdict::metric_equal;
    return ok ? kExitOk : kExitReplayMismatch;
}

std::vector<std::vector<events::EventRecord>> load_batch_logs(const fs::path& batch) {
    const auto runs = runner::list_run_dirs(batch);
    if (runs.empty()) fail(Errc::NoRunsFound, batch.string());
    std::vector<std::vector<events::EventRecord>> logs;
    for (const auto& r : runs) {
        const auto path = r / "events.jsonl";
        logs.push_back(fs::exists(path) ? events::read_events(path).records : std::vector<events::EventRecord>{});
    }
    return logs;
}

int cmd_aggregate(Context& ctx) {
    const fs::path batch = ctx.flag("batch");
    const auto logs = load_batch_logs(batch);
    if (ctx.inv.has("tag")) {
        write_output(ctx, events::aggregate_csv(events::aggregate(logs, ctx.flag("tag"))));
        return kExitOk;
    }
    const fs::path dir = ctx.inv.has("out") ? fs::path(ctx.flag("out")) : batch / "aggregate";
    fs::create_directories(dir);
    for (const auto& tag : events::scalar_tags(logs)) {
        const auto path = dir / (report::file_stem(tag) + ".csv");
        write_file_atomic(path, events::aggregate_csv(events::aggregate(logs, tag)));
        ctx.out << path.string() << "\n";
    }
    return kExitOk;
}

int cmd_report(Context& ctx) {
    const auto bundle = report::build_report(ctx.flag("batch"), ctx.flag("out"));
    ctx.out << (bundle.dir / "index.html").string() << "\n";
    return kExitOk;
}

int cmd_hpo_init(Context& ctx) {
    const fs::path path = ctx.flag("study");
    if (fs::exists(path)) fail(Errc::Collision, path.string());
    const auto space = hpo::space_from_json(read_file(ctx.flag("space")));
    auto config = hpo::default_config(space);
    if (auto v = ctx.u64("init-random")) config.init_random = *v;
    if (auto v = ctx.u64("candidates")) config.candidates = *v;
    if (auto v = ctx.real("xi")) config.xi = *v;
    const auto goal = ctx.flag("goal", "maximize") == "maximize" ? hpo::Goal::maximize : hpo::Goal::minimize;
    const auto seed = seedctl::resolve_seed(ctx.u64("seed"), seedctl::os_entropy());
    const auto study = hpo::make_study(space, goal, seed.value, config);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file_atomic(path, hpo::study_to_json(study));
    ctx.out << "wrote " << path.string() << " seed=" << seed.value << "\n";
    return kExitOk;
}

int cmd_hpo_run(Context& ctx) {
    const fs::path study_path = ctx.flag("study");
    auto study = hpo::study_from_json(read_file(study_path));
    const std::string method_name = ctx.flag("method", "bayes");
    const auto method = method_name == "random" ? hpo::Method::random
                        : method_name == "grid" ? hpo::Method::grid
                                                : hpo::Method::bayes;
    const auto resolution = ctx.u64("grid-resolution").value_or(5);
    auto budget = *ctx.u64("budget");
    if (method == hpo::Method::grid) budget = std::min(budget, hpo::grid_size(study.space, resolution));
    const std::string objective = ctx.flag("objective");
    const fs::path leaderboard =
        ctx.inv.has("leaderboard") ? fs::path(ctx.flag("leaderboard")) : study_path.parent_path() / "leaderboard.csv";

    runner::RunRequest base;
    base.experiment_name = ctx.flag("experiment-name", "hpo-" + study_path.stem().string());
    base.command = ctx.inv.passthrough;
    base.base_dir = ctx.base_dir();
    base.allow_dirty = ctx.inv.has("allow-dirty");
    base.ignore_rules = ctx.config.ignore;
    const auto code = runner::resolve_code(base);
    const auto started = std::chrono::system_clock::now();
    const hpo::WarningSink warn = [&](const std::string& w) { ctx.err << "warning: " << w << "\n"; };

    while (study.trials_attempted < budget) {
        const auto trial = study.trials_attempted;
        const auto assignment = hpo::suggest_next(study, method, resolution, warn);
        runner::RunRequest req = base;
        for (const auto& spec : study.space.specs) {
            req.command.push_back("--" + spec.name);
            req.command.push_back(hpo::value_text(assignment.at(spec.name)));
        }
        req.params = params_from_tokens(req.command);
        const auto dir = runner::prepare_run_dir(base.base_dir, base.experiment_name, started, trial);
        const auto ref = runner::materialize_code_ref(code, dir);
        const auto seed = seedctl::derive_subseed(study.seed, "run/" + std::to_string(trial));
        const auto result = runner::execute_with_seed(req, dir, ref, seed, seedctl::SeedOrigin::user);

        std::optional<double> value;
        if (result.exit_code == 0) {
            if (auto it = result.manifest.metrics_summary.find(objective); it != result.manifest.metrics_summary.end())
                value = it->second;
        }
        ctx.out << "trial " << trial << " " << dir.string() << " ";
        if (value) {
            hpo::observe(study, assignment, *value);
            ctx.out << objective << "=" << format_double(*value) << "\n";
        } else {
            hpo::record_failed_trial(study);
            ctx.out << "failed\n";
        }
        write_file_atomic(study_path, hpo::study_to_json(study));
    }
    if (leaderboard.has_parent_path()) fs::create_directories(leaderboard.parent_path());
    write_file_atomic(leaderboard, hpo::leaderboard_csv(study));
    if (const auto best = hpo::best_observed(study)) {
        ctx.out << "best trial " << best->trial_index << " " << objective << "=" << format_double(best->objective);
        for (const auto& [k, v] : best->assignment) ctx.out << " " << k << "=" << hpo::value_text(v);
        ctx.out << "\n";
    }
    ctx.out << "leaderboard " << leaderboard.string() << "\n";
    return kExitOk;
}

int cmd_data_verify(Context& ctx) {
    const auto rep = dataprep::verify_folder_format(ctx.flag("root"));
    for (const auto& [key, n] : rep.file_counts) ctx.out << key.first << "/" << key.second << ": " << n << "\n";
    for (const auto& v : rep.violations) ctx.out << "violation: " << v << "\n";
    ctx.out << (rep.valid() ? "valid" : "invalid") << "\n";
    return rep.valid() ? kExitOk : kExitError;
}

int cmd_data_stats(Context& ctx) {
    const auto stats = dataprep::image_folder_stats(ctx.flag("root"), ctx.flag("split", "train"));
    write_output(ctx, stats.to_json() + "\n");
    return kExitOk;
}

std::vector<dataprep::LabeledItem> items_from_csv(const std::string& text) {
    std::vector<dataprep::LabeledItem> items;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (first && line == "id,label") {
            first = false;
            continue;
        }
        first = false;
        const auto comma = line.rfind(',');
        if (comma == std::string::npos) fail(Errc::InvalidSpec, "expected id,label: " + line);
        items.push_back({line.substr(0, comma), line.substr(comma + 1)});
    }
    return items;
}

std::vector<dataprep::LabeledItem> items_from_folder(const fs::path& root) {
    std::vector<dataprep::LabeledItem> items;
    const fs::path train = root / "train";
    if (!fs::is_directory(train)) fail(Errc::NotADirectory, train.string());
    for (const auto& cls : fs::directory_iterator(train)) {
        if (!cls.is_directory()) continue;
        for (const auto& f : fs::directory_iterator(cls.path()))
            if (f.is_regular_file())
                items.push_back({f.path().lexically_relative(root).generic_string(), cls.path().filename().string()});
    }
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return items;
}

int cmd_data_split(Context& ctx) {
    const auto items =
        ctx.inv.has("items") ? items_from_csv(read_file(ctx.flag("items"))) : items_from_folder(ctx.flag("root"));
    const auto part = dataprep::partition_train_val(items, *ctx.real("ratio"), *ctx.u64("seed"),
                                                    ctx.inv.has("stratified"));
    const fs::path dir = ctx.flag("out");
    fs::create_directories(dir);
    auto lines = [](const std::vector<std::string>& ids) {
        std::string s;
        for (const auto& id : ids) s += id + "\n";
        return s;
    };
    write_file_atomic(dir / "train.txt", lines(part.train));
    write_file_atomic(dir / "val.txt", lines(part.val));
    ctx.out << "train " << part.train.size() << " val " << part.val.size() << " -> " << dir.string() << "\n";
    return kExitOk;
}

std::vector<std::pair<double, double>> parse_centers(const std::string& text) {
    std::vector<std::pair<double, double>> centers;
    std::istringstream in(text);
    for (std::string item; std::getline(in, item, ';');) {
        const auto colon = item.find(':');
        const auto x = colon == std::string::npos ? std::nullopt : parse_double(item.substr(0, colon));
        const auto y = colon == std::string::npos ? std::nullopt : parse_double(item.substr(colon + 1));
        if (!x || !y) fail(Errc::BadValue, "centers: expected x:y;x:y");
        centers.emplace_back(*x, *y);
    }
    if (centers.empty()) fail(Errc::BadValue, "centers: expected x:y;x:y");
    return centers;
}

int cmd_data_toy2d(Context& ctx) {
    dataprep::Toy2DSpec spec;
    spec.n_points = *ctx.u64("n");
    spec.seed = ctx.u64("seed").value_or(0);
    const std::string family = ctx.flag("family");
    if (family == "xor") {
        spec.family = dataprep::XorFamily{};
    } else if (family == "blobs") {
        dataprep::BlobsFamily b;
        b.centers = ctx.inv.has("centers") ? parse_centers(ctx.flag("centers"))
                                           : std::vector<std::pair<double, double>>{{-1.0, -1.0}, {1.0, 1.0}};
        b.sigma = ctx.real("sigma").value_or(0.4);
        spec.family = b;
    } else if (family == "spiral") {
        dataprep::SpiralFamily s;
        s.turns = ctx.real("turns").value_or(s.turns);
        s.noise_sigma = ctx.real("noise").value_or(s.noise_sigma);
        spec.family = s;
    } else {
        dataprep::DonutFamily d;
        d.r_inner = ctx.real("r-inner").value_or(d.r_inner);
        d.r_outer = ctx.real("r-outer").value_or(d.r_outer);
        spec.family = d;
    }
    write_output(ctx, dataprep::points_to_csv(dataprep::generate_2d(spec)));
    return kExitOk;
}

int cmd_demo_train(Context& ctx) {
    demo::TrainConfig config;
    config.epochs = ctx.u64("epochs").value_or(config.epochs);
    config.lr = ctx.real("lr").value_or(config.lr);
    config.grid_resolution = ctx.u64("grid-resolution").value_or(config.grid_resolution);
    demo::validate(config);

    std::uint64_t seed = ctx.u64("seed").value_or(0);
    if (const char* env = std::getenv("RUN_SEED"); env && *env) {
        const auto v = parse_u64(env);
        if (!v) fail(Errc::BadValue, "RUN_SEED: expected an unsigned 64-bit integer");
        seed = *v;
    }
    fs::path run_dir;
    if (const char* env = std::getenv("RUN_DIR"); env && *env)
        run_dir = env;
    else if (ctx.inv.has("out-dir"))
        run_dir = ctx.flag("out-dir");
    else
        fail(Errc::MissingRequired, "out-dir (or RUN_DIR)");
    fs::create_directories(run_dir);

    const auto data = ctx.inv.has("dataset") ? dataprep::points_from_csv(read_file(ctx.flag("dataset")))
                                             : demo::default_dataset();
    events::EventWriter log(run_dir / "events.jsonl");
    const auto start = std::chrono::steady_clock::now();
    const auto model = demo::train(config, seed, data, [&](const events::EventRecord& rec) {
        auto stamped = rec;
        stamped.time_ms = static_cast<std::uint64_t>(
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count());
        log.append(stamped);
    });
    ctx.out << "seed " << seed << " w0 " << format_double(model.w[0]) << " w1 " << format_double(model.w[1])
            << " b " << format_double(model.b) << " accuracy " << format_double(demo::accuracy(model, data)) << "\n";
    return kExitOk;
}

int dispatch(Context& ctx) {
    const auto& inv = ctx.inv;
    if (inv.subcommand == "init") return cmd_init(ctx);
    if (inv.subcommand == "run") return cmd_run(ctx);
    if (inv.subcommand == "replay") return cmd_replay(ctx);
    if (inv.subcommand == "aggregate") return cmd_aggregate(ctx);
    if (inv.subcommand == "report") return cmd_report(ctx);
    if (inv.subcommand == "hpo") return inv.action == "init" ? cmd_hpo_init(ctx) : cmd_hpo_run(ctx);
    if (inv.subcommand == "data") {
        if (inv.action == "verify") return cmd_data_verify(ctx);
        if (inv.action == "stats") return cmd_data_stats(ctx);
        if (inv.action == "split") return cmd_data_split(ctx);
        return cmd_data_toy2d(ctx);
    }
    return cmd_demo_train(ctx);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        const auto inv = parse_cli(args);
        if (inv.help) {
            out << usage();
            return kExitOk;
        }
        Context ctx{inv, load_config(fs::current_path()), out, err};
        return dispatch(ctx);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        if (e.code() == Errc::UnknownFlag || e.code() == Errc::MissingRequired || e.code() == Errc::BadValue)
            err << "run 'repro-harness --help' for usage\n";
        return exit_code_for(e.code());
    } catch (const fs::filesystem_error& e) {
        err << "error: IoFailure: " << e.what() << "\n";
        return kExitError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    }
}

}  // namespace repro::cli
