#include "repro/dataprep.hpp"
#include "repro/demo_trainer.hpp"
#include "repro/error.hpp"
#include "repro/events.hpp"
#include "repro/gp.hpp"
#include "repro/hpo.hpp"
#include "repro/manifest.hpp"
#include "repro/report.hpp"
#include "repro/runner.hpp"
#include "repro/seedctl.hpp"

#include "support.hpp"

#include <Eigen/Dense>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

using namespace repro;
namespace fs = std::filesystem;

namespace {

struct Failure {
    std::string what;
};

void expect(bool ok, const std::string& what) {
    if (!ok) throw Failure{what};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string first_token(const std::string& text) {
    std::istringstream in(text);
    std::string tok;
    in >> tok;
    return tok;
}

std::string field_after(const std::string& text, const std::string& prefix) {
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);)
        if (line.rfind(prefix, 0) == 0) return first_token(line.substr(prefix.size()));
    return {};
}

std::string fixture_repo(const fs::path& dir) {
    return testing::make_repo(dir, {{"README", "fixture\n"}, {"src/model.cfg", "layers = 2\n"}});
}

std::vector<std::vector<events::EventRecord>> batch_logs(const fs::path& batch) {
    std::vector<std::vector<events::EventRecord>> logs;
    for (const auto& r : runner::list_run_dirs(batch)) logs.push_back(events::read_events(r / "events.jsonl").records);
    return logs;
}

// OpenSSL one-shot digest, independent of the library's hashing code.
std::string evp_sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr)) throw Failure{"EVP_Digest failed"};
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

// Sorted (relpath LF sha256 LF) sequence over the tree, skipping .git and the output directory.
std::string oracle_tree_hash(const fs::path& root) {
    std::vector<std::pair<std::string, std::string>> entries;
    for (auto it = fs::recursive_directory_iterator(root); it != fs::recursive_directory_iterator(); ++it) {
        const auto name = it->path().filename().string();
        if (it->is_directory() && (name == ".git" || name == "runs")) {
            it.disable_recursion_pending();
            continue;
        }
        if (!it->is_regular_file()) continue;
        entries.emplace_back(fs::relative(it->path(), root).generic_string(), evp_sha256_hex(read_file(it->path())));
    }
    std::sort(entries.begin(), entries.end());
    std::string seq;
    for (const auto& [rel, digest] : entries) seq += rel + "\n" + digest + "\n";
    return evp_sha256_hex(seq);
}

void c1_round_trip() {
    testing::TempDir tmp;
    const auto repo = tmp / "repo";
    fixture_repo(repo);
    const auto t0 = std::chrono::steady_clock::now();
    const auto run = testing::harness(
        {"run", "--experiment-name", "demo", "--seed", "42", "--", "demo-train", "--epochs", "100", "--lr", "0.01"},
        repo);
    expect(run.exit_code == 0, "run exited " + std::to_string(run.exit_code) + ": " + run.err);
    const fs::path run_dir = repo / first_token(run.out);
    const auto rep = testing::harness({"replay", "--from", run_dir.string()}, repo);
    const double elapsed = seconds_since(t0);
    expect(rep.exit_code == 0, "replay exited " + std::to_string(rep.exit_code) + ": " + rep.err);
    const fs::path replay_dir = repo / field_after(rep.out, "replay ");
    expect(read_file(replay_dir / "report.json").find("\"exact\"") != std::string::npos, "verdict is not exact");
    expect(elapsed < 10.0, "took " + std::to_string(elapsed) + " s");
}

void c2_gate() {
    testing::TempDir tmp;
    const auto repo = tmp / "repo";
    fixture_repo(repo);
    testing::write(repo / "src/model.cfg", "layers = 3\n");

    const auto refused = testing::harness({"run", "--experiment-name", "g", "--seed", "1", "--", "demo-train"}, repo);
    expect(refused.exit_code == 3, "dirty run exited " + std::to_string(refused.exit_code));
    expect(refused.err.find("DirtyWorktree") != std::string::npos, "missing DirtyWorktree in stderr");

    const auto allowed = testing::harness(
        {"run", "--experiment-name", "g", "--seed", "1", "--allow-dirty", "--", "demo-train", "--epochs", "5"}, repo);
    expect(allowed.exit_code == 0, "allow-dirty run exited " + std::to_string(allowed.exit_code));
    const fs::path run_dir = repo / first_token(allowed.out);
    const auto ref = load_manifest(run_dir / "manifest.json").code_ref;
    expect(ref.kind == vcs::CodeKind::snapshot && ref.snapshot_hash, "code_ref is not a snapshot");
    expect(*ref.snapshot_hash == oracle_tree_hash(repo), "snapshot hash differs from the oracle");

    const auto stored = run_dir / "code/src/model.cfg";
    auto bytes = read_file(stored);
    bytes[0] ^= 1;
    testing::write(stored, bytes);
    const auto rep = testing::harness({"replay", "--from", run_dir.string()}, repo);
    expect(rep.exit_code == 5, "tampered replay exited " + std::to_string(rep.exit_code));
    expect(rep.err.find("SnapshotHashMismatch") != std::string::npos, "missing SnapshotHashMismatch in stderr");
}

struct BrutePoint {
    double mean, std, min, max;
    std::size_t n;
};

std::map<std::uint64_t, BrutePoint> brute_aggregate(const std::vector<std::vector<events::EventRecord>>& logs,
                                                    const std::string& tag) {
    std::map<std::uint64_t, std::vector<double>> by_step;
    for (const auto& log : logs) {
        std::map<std::uint64_t, double> last;
        for (const auto& r : log)
            if (r.tag == tag && r.kind() == events::EventKind::scalar) last[r.step] = std::get<double>(r.payload);
        for (auto [s, v] : last) by_step[s].push_back(v);
    }
    std::map<std::uint64_t, BrutePoint> out;
    for (auto& [s, vs] : by_step) {
        long double sum = 0;
        for (double v : vs) sum += v;
        const long double mean = sum / vs.size();
        long double ss = 0;
        for (double v : vs) ss += (v - mean) * (v - mean);
        out[s] = {static_cast<double>(mean), vs.size() > 1 ? static_cast<double>(std::sqrt(ss / (vs.size() - 1))) : 0.0,
                  *std::min_element(vs.begin(), vs.end()), *std::max_element(vs.begin(), vs.end()), vs.size()};
    }
    return out;
}

fs::path demo_batch(const fs::path& repo, const std::string& name) {
    const auto run = testing::harness({"run", "--experiment-name", name, "--seed", "42", "--multi-run", "5",
                                       "--parallel", "5", "--", "demo-train", "--epochs", "40", "--lr", "0.05"},
                                      repo);
    expect(run.exit_code == 0, "multi-run exited " + std::to_string(run.exit_code) + ": " + run.err);
    return repo / field_after(run.out, "batch ");
}

void c3_aggregation() {
    testing::TempDir tmp;
    const auto repo = tmp / "repo";
    fixture_repo(repo);
    const auto batch = demo_batch(repo, "agg");
    std::set<std::uint64_t> seeds;
    for (const auto& r : runner::list_run_dirs(batch)) seeds.insert(load_manifest(r / "manifest.json").seed);
    expect(seeds.size() == 5, "sub-seeds are not distinct");

    const auto logs = batch_logs(batch);
    for (const char* tag : {"loss", "accuracy"}) {
        const auto got = events::aggregate(logs, tag);
        const auto want = brute_aggregate(logs, tag);
        expect(got.points.size() == want.size(), std::string(tag) + ": step count differs");
        for (const auto& p : got.points) {
            const auto& o = want.at(p.step);
            expect(std::abs(p.mean - o.mean) <= 1e-12 && std::abs(p.std - o.std) <= 1e-12 && p.min == o.min &&
                       p.max == o.max && p.n == o.n && p.n == 5,
                   std::string(tag) + ": mismatch at step " + std::to_string(p.step));
        }
    }

    const auto two = events::aggregate({{events::scalar(1, "x", 1.0)}, {events::scalar(1, "x", 3.0)}}, "x");
    expect(std::abs(two.points.at(0).std - std::sqrt(2.0)) <= 1e-15, "{1,3} std is not sqrt(2)");
}

void c4_seeds() {
    expect(seedctl::splitmix64_next(0) == 0xE220A8397B1DCDAFULL, "splitmix64_next(0) mismatch");
    std::set<std::uint64_t> distinct;
    for (int i = 0; i < 1000; ++i) {
        const std::string label = "run/" + std::to_string(i);
        const auto v = seedctl::derive_subseed(42, label);
        distinct.insert(v);
        for (int r = 0; r < 1000; ++r)
            if (seedctl::derive_subseed(42, label) != v) throw Failure{"unstable subseed for " + label};
    }
    expect(distinct.size() == 1000, "subseeds collide over run/0..run/999");
    expect(seedctl::derive_subseed(42, "run/0") == 12629037377616862796ULL, "frozen run/0 subseed mismatch");
}

struct GpInstance {
    hpo::Points x;
    std::vector<double> y;
};

GpInstance gp_instance(seedctl::Stream& s, bool noisy) {
    const auto d = 1 + s.next_below(3);
    const auto n = 2 + s.next_below(19);
    GpInstance inst;
    for (std::uint64_t i = 0; i < n; ++i) {
        std::vector<double> p(d);
        for (auto& v : p) v = s.next_unit_float();
        double t = 0;
        for (auto v : p) t += std::sin(6 * v);
        inst.x.push_back(p);
        const double e = s.next_gaussian();
        inst.y.push_back(10 * t + (noisy ? e : 0.0));
    }
    return inst;
}

std::optional<double> eigen_lml(const hpo::Points& x, const Eigen::VectorXd& y, double ell, double noise) {
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            double d2 = 0;
            for (std::size_t c = 0; c < x[i].size(); ++c) d2 += (x[i][c] - x[j][c]) * (x[i][c] - x[j][c]);
            k(i, j) = std::exp(-d2 / (2 * ell * ell)) + (i == j ? noise : 0.0);
        }
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) return std::nullopt;
    const Eigen::VectorXd alpha = llt.solve(y);
    const double logdet = 2 * llt.matrixLLT().diagonal().array().log().sum();
    return -0.5 * y.dot(alpha) - 0.5 * logdet - 0.5 * n * std::log(2 * std::numbers::pi);
}

void c5_gp() {
    auto s = seedctl::make_stream(101);
    for (int t = 0; t < 20; ++t) {
        const auto inst = gp_instance(s, false);
        const double d = static_cast<double>(inst.x.front().size());
        const auto gp = hpo::fit_gp_fixed(inst.x, inst.y, {0.05 * std::sqrt(d), 1.0, 1e-6});
        for (std::size_t i = 0; i < inst.x.size(); ++i)
            expect(std::abs(hpo::posterior(gp, inst.x[i]).mu - inst.y[i]) <= 1e-3,
                   "interpolation error on instance " + std::to_string(t));
    }

    auto v = seedctl::make_stream(102);
    for (int t = 0; t < 20; ++t) {
        const auto inst = gp_instance(v, true);
        const auto gp = hpo::fit_gp(inst.x, inst.y);
        for (int q = 0; q < 50; ++q) {
            std::vector<double> x(inst.x.front().size());
            for (auto& c : x) c = v.next_unit_float();
            const auto p = hpo::posterior_standardized(gp, x);
            expect(p.sigma * p.sigma <= gp.hyper.signal_variance + 1e-9, "posterior variance exceeds prior");
        }
    }

    auto g = seedctl::make_stream(103);
    const hpo::GpConfig config;
    for (int t = 0; t < 20; ++t) {
        const auto inst = gp_instance(g, true);
        Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(inst.y.data(), static_cast<Eigen::Index>(inst.y.size()));
        const double mean = y.mean();
        y = (y.array() - mean) / std::sqrt((y.array() - mean).square().mean());
        const double root_d = std::sqrt(static_cast<double>(inst.x.front().size()));
        std::optional<double> best;
        double best_ell = 0, best_noise = 0;
        for (double f : config.lengthscale_factors)
            for (double noise : config.noise_variances)
                if (const auto lml = eigen_lml(inst.x, y, f * root_d, noise); lml && (!best || *lml > *best)) {
                    best = lml;
                    best_ell = f * root_d;
                    best_noise = noise;
                }
        const auto gp = hpo::fit_gp(inst.x, inst.y, config);
        expect(best && gp.hyper.lengthscale == best_ell && gp.hyper.noise_variance == best_noise,
               "grid selection differs on instance " + std::to_string(t));
    }
}

void c6_ei() {
    auto s = seedctl::make_stream(104);
    for (int i = 0; i < 100000; ++i) {
        const double mu = (s.next_unit_float() - 0.5) * 200;
        const double sigma = s.next_unit_float() * 10;
        const double best = (s.next_unit_float() - 0.5) * 200;
        expect(hpo::expected_improvement(mu, sigma, best, 0.01, hpo::Goal::maximize) >= 0.0 &&
                   hpo::expected_improvement(mu, sigma, best, 0.01, hpo::Goal::minimize) >= 0.0,
               "negative EI");
        expect(hpo::expected_improvement(mu, 0.0, best, 0.0, hpo::Goal::maximize) == 0.0, "EI(sigma=0) != 0");
    }
    expect(std::abs(hpo::expected_improvement(0, 1, 0, 0, hpo::Goal::maximize) - 0.3989422804014327) <= 1e-9,
           "EI(z=0, sigma=1) != phi(0)");
}

void c7_hpo() {
    const auto t0 = std::chrono::steady_clock::now();
    const hpo::ParamSpace space{{hpo::ParamSpec::continuous("x", 0, 1)}};
    const auto f = [](const hpo::Assignment& a, std::uint64_t) -> std::optional<double> {
        const double x = std::get<double>(a.at("x"));
        return -(x - 0.3) * (x - 0.3);
    };
    std::vector<double> bayes_regret, random_regret;
    int hits = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        hpo::StudyConfig cfg;
        cfg.init_random = 5;
        cfg.candidates = 512;
        auto bo = hpo::make_study(space, hpo::Goal::maximize, seed, cfg);
        hpo::optimize(bo, 30, hpo::Method::bayes, f);
        const auto best = *hpo::best_observed(bo);
        if (std::abs(std::get<double>(best.assignment.at("x")) - 0.3) <= 0.05) ++hits;
        bayes_regret.push_back(-best.objective);

        auto rs = hpo::make_study(space, hpo::Goal::maximize, seed, cfg);
        hpo::optimize(rs, 30, hpo::Method::random, f);
        random_regret.push_back(-hpo::best_observed(rs)->objective);
    }
    const auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return (v[9] + v[10]) / 2;
    };
    const double elapsed = seconds_since(t0);
    expect(hits >= 19, std::to_string(hits) + "/20 studies within 0.05");
    expect(median(bayes_regret) < median(random_regret), "median regret not better than random search");
    expect(elapsed < 30.0, "took " + std::to_string(elapsed) + " s");
}

void c8_streaming() {
    const std::size_t channels = 3, total = 100000;
    // The sample source regenerates values on demand, so nothing is buffered.
    auto sample = [](seedctl::Stream& s, std::vector<double>& out) {
        out.resize(3);
        out[0] = s.next_unit_float();
        out[1] = 1e6 + s.next_unit_float();
        out[2] = s.next_gaussian() * 100;
    };
    auto s = seedctl::make_stream(31);
    std::size_t produced = 0;
    const auto cs = dataprep::compute_mean_std(
        [&](std::vector<double>& out) {
            if (produced == total) return false;
            sample(s, out);
            ++produced;
            return true;
        },
        channels);

    std::vector<long double> sum(channels), ss(channels);
    std::vector<double> row;
    auto pass1 = seedctl::make_stream(31);
    for (std::size_t i = 0; i < total; ++i) {
        sample(pass1, row);
        for (std::size_t c = 0; c < channels; ++c) sum[c] += row[c];
    }
    auto pass2 = seedctl::make_stream(31);
    for (std::size_t i = 0; i < total; ++i) {
        sample(pass2, row);
        for (std::size_t c = 0; c < channels; ++c) ss[c] += (row[c] - sum[c] / total) * (row[c] - sum[c] / total);
    }
    for (std::size_t c = 0; c < channels; ++c) {
        const double mean = static_cast<double>(sum[c] / total);
        const double sd = static_cast<double>(std::sqrt(ss[c] / (total - 1)));
        expect(cs.channel(c).count() == total, "sample count mismatch");
        expect(std::abs(cs.channel(c).mean() - mean) <= 1e-10 * std::abs(mean), "mean differs from two-pass");
        expect(std::abs(cs.channel(c).std_sample() - sd) <= 1e-10 * sd, "std differs from two-pass");
    }

    auto r = seedctl::make_stream(32);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> xs(1 + r.next_below(500));
        for (auto& x : xs) x = r.next_gaussian() * 10 + 3;
        dataprep::RunningStats whole, a, b;
        const auto cut = r.next_below(xs.size() + 1);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            whole.push(xs[i]);
            (i < cut ? a : b).push(xs[i]);
        }
        a.merge(b);
        expect(a.count() == whole.count() &&
                   std::abs(a.mean() - whole.mean()) <= 1e-12 * std::max(1.0, std::abs(whole.mean())) &&
                   std::abs(a.m2() - whole.m2()) <= 1e-12 * std::max(1.0, whole.m2()),
               "shard merge differs from single stream");
    }
}

std::size_t half_up(double v) { return static_cast<std::size_t>(std::floor(v + 0.5)); }

void c9_splits() {
    auto s = seedctl::make_stream(33);
    int checked = 0;
    for (int t = 0; t < 1000; ++t) {
        std::vector<dataprep::LabeledItem> items(1 + s.next_below(60));
        const auto classes = 1 + s.next_below(5);
        for (std::size_t i = 0; i < items.size(); ++i)
            items[i] = {"id" + std::to_string(i), "c" + std::to_string(s.next_below(classes))};
        const double ratio = 0.05 + 0.9 * s.next_unit_float();
        const auto seed = s.next_u64();
        const bool stratified = s.next_below(2) == 0;

        std::map<std::string, std::size_t> class_n;
        for (const auto& it : items) ++class_n[it.label];
        std::size_t expect_train = 0;
        if (stratified) {
            for (const auto& [c, n] : class_n) {
                auto take = std::min(n, half_up(ratio * n));
                if (n >= 2 && take == 0) take = 1;
                expect_train += take;
            }
        } else {
            expect_train = std::min(items.size(), half_up(ratio * items.size()));
        }
        if (items.size() >= 2 && (expect_train == 0 || expect_train == items.size())) {
            expect(testing::error_code_of([&] { dataprep::partition_train_val(items, ratio, seed, stratified); }) ==
                       Errc::DegenerateRatio,
                   "degenerate instance not rejected");
            continue;
        }
        const auto p = dataprep::partition_train_val(items, ratio, seed, stratified);
        ++checked;
        std::set<std::string> train(p.train.begin(), p.train.end()), val(p.val.begin(), p.val.end());
        for (const auto& id : train) expect(!val.count(id), "train and val overlap");
        expect(train.size() == p.train.size() && val.size() == p.val.size() &&
                   train.size() + val.size() == items.size(),
               "partition is not exhaustive");
        if (stratified) {
            std::map<std::string, std::size_t> got;
            for (const auto& it : items)
                if (train.count(it.id)) ++got[it.label];
            for (const auto& [c, n] : class_n)
                expect(std::abs(static_cast<double>(got[c]) - ratio * n) < 1.0, "class count off by more than 1");
        }
        const auto again = dataprep::partition_train_val(items, ratio, seed, stratified);
        expect(again.train == p.train && again.val == p.val, "split not repeatable");
    }
    expect(checked > 800, "too few non-degenerate instances");
}

void c10_gradient() {
    const std::vector<dataprep::Point2D> one{{1, 0, 1}};
    const auto g0 = demo::loss_and_grad({}, one);
    expect(std::abs(g0.loss - std::log(2.0)) <= 1e-12 && std::abs(g0.grad_w[0] + 0.5) <= 1e-12 &&
               std::abs(g0.grad_w[1]) <= 1e-12,
           "hand-derived example mismatch");

    auto s = seedctl::make_stream(41);
    const double h = 1e-6;
    for (int t = 0; t < 100; ++t) {
        std::vector<dataprep::Point2D> d(1 + s.next_below(30));
        for (auto& p : d) p = {s.next_gaussian() * 2, s.next_gaussian() * 2, static_cast<int>(s.next_below(2))};
        const demo::LogisticModel m{{s.next_gaussian(), s.next_gaussian()}, s.next_gaussian()};
        const auto g = demo::loss_and_grad(m, d);
        const double analytic[3] = {g.grad_w[0], g.grad_w[1], g.grad_b};
        for (int c = 0; c < 3; ++c) {
            auto at = [&](double delta) {
                auto mm = m;
                if (c < 2)
                    mm.w[c] += delta;
                else
                    mm.b += delta;
                return demo::loss_and_grad(mm, d).loss;
            };
            const double fd = (at(h) - at(-h)) / (2 * h);
            const double scale = std::max({std::abs(fd), std::abs(analytic[c]), 1e-12});
            expect(std::abs(fd - analytic[c]) <= 1e-6 * scale, "gradient mismatch on instance " + std::to_string(t));
        }
    }
}

void c11_event_log() {
    const std::string l1 = events::to_json_line(events::scalar(1, "a", 1)) + "\n";
    const std::string l2 = events::to_json_line(events::scalar(2, "a", 2)) + "\n";
    const std::string l3 = events::to_json_line(events::scalar(3, "a", 3)) + "\n";
    const auto trunc = events::parse_events(l1 + l2 + l3.substr(0, l3.size() / 2));
    expect(trunc.records.size() == 2 && trunc.tail == events::TailStatus::truncated_tail_dropped,
           "truncated tail not tolerated and flagged");
    try {
        events::parse_events(l1 + l2 + "{not json\n" + l3);
        throw Failure{"mid-file corruption accepted"};
    } catch (const Error& e) {
        expect(e.code() == Errc::CorruptLog && e.detail() == "line 3", "wrong corruption report: " + e.detail());
    }
    testing::TempDir tmp;
    events::EventWriter w(tmp / "e.jsonl");
    w.append(events::scalar(5, "loss", 1));
    w.append(events::scalar(1, "acc", 1));
    expect(testing::error_code_of([&] { w.append(events::scalar(4, "loss", 1)); }) == Errc::StepRegression,
           "step regression accepted");
}

std::map<std::string, std::string> read_dir(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = read_file(e.path());
    return out;
}

void c12_report() {
    testing::TempDir tmp;
    const auto repo = tmp / "repo";
    fixture_repo(repo);
    const auto batch = demo_batch(repo, "rep");
    const auto rep = testing::harness({"report", "--batch", batch.string()}, repo);
    expect(rep.exit_code == 0, "report exited " + std::to_string(rep.exit_code) + ": " + rep.err);
    const auto first = read_dir(batch / "report");

    const auto logs = batch_logs(batch);
    for (const auto& tag : events::scalar_tags(logs)) {
        const auto stem = "series-" + report::file_stem(tag);
        expect(first.count(stem + ".svg") == 1, stem + ".svg missing");
        const auto agg = testing::harness({"aggregate", "--batch", batch.string(), "--tag", tag}, repo);
        expect(agg.exit_code == 0, "aggregate failed for " + tag);
        expect(first.at(stem + ".csv") == agg.out, stem + ".csv differs from aggregate output");
        expect(agg.out == events::aggregate_csv(events::aggregate(logs, tag)), tag + ": CLI and library disagree");
    }

    expect(testing::harness({"report", "--batch", batch.string()}, repo).exit_code == 0, "second report failed");
    expect(read_dir(batch / "report") == first, "report bytes changed on regeneration");
}

}  // namespace

int main() {
    testing::hermetic_env();
    const std::vector<std::pair<std::string, std::function<void()>>> criteria{
        {"reproducibility round trip", c1_round_trip},
        {"gate enforcement", c2_gate},
        {"multi-run aggregation", c3_aggregation},
        {"seed determinism", c4_seeds},
        {"GP correctness", c5_gp},
        {"EI properties", c6_ei},
        {"HPO end-to-end", c7_hpo},
        {"streaming statistics", c8_streaming},
        {"splits", c9_splits},
        {"demo trainer gradient check", c10_gradient},
        {"event-log robustness", c11_event_log},
        {"report fidelity", c12_report},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        std::string reason;
        try {
            criteria[i].second();
        } catch (const Failure& f) {
            reason = f.what;
        } catch (const std::exception& e) {
            reason = std::string("exception: ") + e.what();
        }
        std::cout << (reason.empty() ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first;
        if (!reason.empty()) std::cout << " (" << reason << ")";
        std::cout << "\n";
        if (!reason.empty()) ++failed;
    }
    return failed == 0 ? 0 : 1;
}
