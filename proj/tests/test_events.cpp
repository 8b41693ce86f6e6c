#include "repro/error.hpp"
#include "repro/events.hpp"
#include "repro/seedctl.hpp"
#include "repro/util.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

using namespace repro;
using namespace repro::events;

namespace {

std::vector<EventRecord> scalars(const std::string& tag, std::vector<std::pair<std::uint64_t, double>> pts) {
    std::vector<EventRecord> out;
    for (auto [s, v] : pts) out.push_back(scalar(s, tag, v));
    return out;
}

// Brute-force reference: collects values per step and evaluates the textbook formulas.
struct OraclePoint {
    double mean, std, min, max;
    std::size_t n;
};

std::map<std::uint64_t, OraclePoint> oracle(const std::vector<std::vector<EventRecord>>& logs, const std::string& tag) {
    std::map<std::uint64_t, std::vector<double>> by_step;
    for (const auto& log : logs) {
        std::map<std::uint64_t, double> last;
        for (const auto& r : log)
            if (r.tag == tag && r.kind() == EventKind::scalar) last[r.step] = std::get<double>(r.payload);
        for (auto [s, v] : last) by_step[s].push_back(v);
    }
    std::map<std::uint64_t, OraclePoint> out;
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

}  // namespace

TEST_CASE("append writes ordered lines") {
    testing::TempDir tmp;
    EventWriter w(tmp / "events.jsonl");
    append_event(w, scalar(1, "loss", 0.5));
    append_event(w, scalar(2, "loss", 0.4));
    const auto text = read_file(tmp / "events.jsonl");
    CHECK(text ==
          "{\"step\":1,\"time_ms\":0,\"tag\":\"loss\",\"kind\":\"scalar\",\"payload\":0.5}\n"
          "{\"step\":2,\"time_ms\":0,\"tag\":\"loss\",\"kind\":\"scalar\",\"payload\":0.4}\n");
    const auto r = read_events(tmp / "events.jsonl");
    CHECK(r.records.size() == 2);
    CHECK(r.tail == TailStatus::clean);
}

TEST_CASE("step regression is rejected per tag") {
    testing::TempDir tmp;
    EventWriter w(tmp / "e.jsonl");
    w.append(scalar(2, "loss", 1));
    w.append(scalar(1, "acc", 1));
    w.append(scalar(2, "loss", 0.9));
    CHECK(testing::error_code_of([&] { w.append(scalar(1, "loss", 1)); }) == Errc::StepRegression);
    // Reopening resumes tracking from the file.
    EventWriter again(tmp / "e.jsonl");
    CHECK(testing::error_code_of([&] { again.append(scalar(1, "loss", 1)); }) == Errc::StepRegression);
    again.append(scalar(3, "loss", 1));
}

TEST_CASE("payload validation") {
    auto bad = [](Payload p) {
        return testing::error_code_of([&] { validate(EventRecord{0, 0, "t", std::move(p)}); });
    };
    CHECK(bad(std::numeric_limits<double>::quiet_NaN()) == Errc::InvalidPayload);
    CHECK(bad(std::numeric_limits<double>::infinity()) == Errc::InvalidPayload);
    CHECK(bad(Histogram{{0, 1, 1}, {1, 1}}) == Errc::InvalidPayload);
    CHECK(bad(Histogram{{0, 1}, {1, 1}}) == Errc::InvalidPayload);
    CHECK(bad(Confusion{{"a", "b"}, {{1, 0}}}) == Errc::InvalidPayload);
    CHECK(bad(Grid{0, 1, 0, 1, 1, 2, {0.5, 1.5}}) == Errc::InvalidPayload);
    CHECK(bad(Grid{0, 1, 0, 1, 1, 2, {0.5}}) == Errc::InvalidPayload);
    CHECK_NOTHROW(validate(EventRecord{0, 0, "h", Histogram{{0, 1, 2}, {3, 4}}}));
    CHECK(testing::error_code_of([] { validate(scalar(0, "", 1.0)); }) == Errc::InvalidPayload);
}

TEST_CASE("every kind round-trips through a line") {
    const std::vector<EventRecord> recs{
        scalar(3, "loss", 0.1, 17),
        {4, 5, "weights", Histogram{{-1, 0, 2.5}, {2, 7}}},
        {5, 6, "cm", Confusion{{"cat", "dog"}, {{3, 1}, {2, 4}}}},
        {6, 7, "decision", Grid{-1, 1, -2, 2, 2, 2, {0, 0.25, 0.5, 1}}},
        {7, 8, "note", std::string("hello \"world\"\n")},
    };
    for (const auto& r : recs) {
        const auto line = to_json_line(r);
        CHECK(line.find('\n') == std::string::npos);
        CHECK(parse_json_line(line) == r);
        CHECK(to_canonical_line(r).find("time_ms") == std::string::npos);
    }
}

TEST_CASE("shortest round-trip floats") {
    const double v = 0.1 + 0.2;
    const auto line = to_json_line(scalar(1, "x", v));
    CHECK(std::get<double>(parse_json_line(line).payload) == v);
    CHECK(line.find("0.30000000000000004") != std::string::npos);
}

TEST_CASE("tolerant reading") {
    const std::string l1 = to_json_line(scalar(1, "a", 1)) + "\n";
    const std::string l2 = to_json_line(scalar(2, "a", 2)) + "\n";
    const std::string l3 = to_json_line(scalar(3, "a", 3)) + "\n";

    auto clean = parse_events(l1 + l2 + l3);
    CHECK(clean.records.size() == 3);
    CHECK(clean.tail == TailStatus::clean);

    auto trunc = parse_events(l1 + l2 + l3.substr(0, l3.size() / 2));
    CHECK(trunc.records.size() == 2);
    CHECK(trunc.tail == TailStatus::truncated_tail_dropped);

    try {
        parse_events(l1 + "garbage\n" + l3);
        FAIL("expected CorruptLog");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::CorruptLog);
        CHECK(e.detail() == "line 2");
    }
    CHECK(parse_events("").records.empty());
}

TEST_CASE("every append prefix reads back exactly") {
    testing::TempDir tmp;
    const auto path = tmp / "e.jsonl";
    EventWriter w(path);
    std::vector<EventRecord> written;
    for (std::uint64_t i = 0; i < 30; ++i) {
        auto rec = i % 3 == 0 ? EventRecord{i, i, "h", Histogram{{0, 1}, {i}}} : scalar(i, "s", 1.0 / (i + 1));
        w.append(rec);
        written.push_back(rec);
        REQUIRE(read_events(path).records == written);
    }
    // Byte-level truncation anywhere in the file still yields a prefix.
    const auto text = read_file(path);
    for (std::size_t cut = 0; cut <= text.size(); cut += 7) {
        const auto r = parse_events(std::string_view(text).substr(0, cut));
        REQUIRE(r.records.size() <= written.size());
        REQUIRE(std::equal(r.records.begin(), r.records.end(), written.begin()));
    }
}

TEST_CASE("writer trims a partial final line on open") {
    testing::TempDir tmp;
    const auto path = tmp / "e.jsonl";
    const auto full = to_json_line(scalar(1, "a", 1)) + "\n";
    testing::write(path, full + "{\"step\":2,\"ti");
    {
        EventWriter w(path);
        w.append(scalar(2, "a", 2));
    }
    const auto r = read_events(path);
    CHECK(r.tail == TailStatus::clean);
    CHECK(r.records.size() == 2);
}

TEST_CASE("digest ignores time_ms only") {
    auto a = scalars("loss", {{1, 0.5}, {2, 0.25}});
    auto b = a;
    b[0].time_ms = 999;
    CHECK(event_digest(a) == event_digest(b));
    b[1] = scalar(2, "loss", 0.250000001);
    CHECK(event_digest(a) != event_digest(b));
    CHECK(event_digest({}) == sha256_hex(""));
}

TEST_CASE("last scalars") {
    auto log = scalars("loss", {{1, 0.5}, {2, 0.25}});
    log.push_back(scalar(2, "acc", 0.75));
    log.push_back(EventRecord{3, 0, "acc", std::string("text")});
    const auto last = last_scalars(log);
    CHECK(last.at("loss") == 0.25);
    CHECK(last.at("acc") == 0.75);
}

TEST_CASE("aggregate: two-run example") {
    const auto s = aggregate({scalars("x", {{1, 1.0}}), scalars("x", {{1, 3.0}})}, "x");
    REQUIRE(s.points.size() == 1);
    const auto& p = s.points[0];
    CHECK(p.mean == 2.0);
    CHECK(std::abs(p.std - std::sqrt(2.0)) <= 1e-15);
    CHECK(p.std == 1.4142135623730951);
    CHECK(p.min == 1.0);
    CHECK(p.max == 3.0);
    CHECK(p.n == 2);
}

TEST_CASE("aggregate: single run and disjoint steps") {
    const auto one = aggregate({scalars("x", {{1, 0.3}, {2, 0.7}})}, "x");
    for (const auto& p : one.points) CHECK(p.std == 0.0);
    CHECK(one.points[1].mean == 0.7);

    const auto disjoint = aggregate({scalars("x", {{1, 1}}), scalars("x", {{2, 2}})}, "x");
    REQUIRE(disjoint.points.size() == 2);
    CHECK(disjoint.points[0].step == 1);
    CHECK(disjoint.points[0].n == 1);
    CHECK(disjoint.points[1].n == 1);

    CHECK(testing::error_code_of([] { aggregate({scalars("x", {{1, 1}})}, "y"); }) == Errc::TagNotFound);
}

TEST_CASE("aggregate matches a brute-force oracle and ignores run order") {
    auto s = seedctl::make_stream(77);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::vector<EventRecord>> logs(1 + s.next_below(6));
        for (auto& log : logs) {
            const auto steps = s.next_below(8);
            for (std::uint64_t st = 0; st < steps; ++st) {
                if (s.next_below(4) == 0) continue;
                log.push_back(scalar(st, "t", (s.next_unit_float() - 0.5) * std::pow(10.0, s.next_below(5))));
                if (s.next_below(5) == 0) log.push_back(EventRecord{st, 0, "t", Histogram{{0, 1}, {1}}});
            }
        }
        logs[0].push_back(scalar(100, "t", 1.0));
        const auto got = aggregate(logs, "t");
        const auto want = oracle(logs, "t");
        REQUIRE(got.points.size() == want.size());
        for (const auto& p : got.points) {
            const auto& o = want.at(p.step);
            const double scale = std::max(1.0, std::abs(o.mean));
            REQUIRE(std::abs(p.mean - o.mean) <= 1e-12 * scale);
            REQUIRE(std::abs(p.std - o.std) <= 1e-12 * std::max(1.0, o.std));
            REQUIRE(p.min == o.min);
            REQUIRE(p.max == o.max);
            REQUIRE(p.n == o.n);
            REQUIRE(p.min <= p.mean);
            REQUIRE(p.mean <= p.max);
        }
        auto reversed = logs;
        std::reverse(reversed.begin(), reversed.end());
        REQUIRE(aggregate(reversed, "t") == got);
    }
}

TEST_CASE("aggregate csv format") {
    const auto s = aggregate({scalars("x", {{1, 1.0}, {2, 0.5}}), scalars("x", {{1, 3.0}})}, "x");
    CHECK(aggregate_csv(s) == "step,mean,std,min,max,n\n1,2,1.4142135623730951,1,3,2\n2,0.5,0,0.5,0.5,1\n");
}

TEST_CASE("confusion accumulation") {
    auto cm = [](std::vector<std::vector<std::uint64_t>> c, std::vector<std::string> labels = {"0", "1"}) {
        return EventRecord{1, 0, "cm", Confusion{std::move(labels), std::move(c)}};
    };
    CHECK(accumulate_confusion({cm({{5, 0}, {0, 5}})}).accuracy() == 1.0);
    const auto m = accumulate_confusion({cm({{3, 1}, {2, 4}})});
    CHECK(m.total() == 10);
    CHECK(m.trace() == 7);
    CHECK(*m.accuracy() == doctest::Approx(0.7).epsilon(1e-15));
    const auto sum = accumulate_confusion({cm({{1, 0}, {0, 1}}), cm({{1, 0}, {0, 1}})});
    CHECK(sum.counts == std::vector<std::vector<std::uint64_t>>{{2, 0}, {0, 2}});
    CHECK(!accumulate_confusion({cm({{0, 0}, {0, 0}})}).accuracy().has_value());
    CHECK(testing::error_code_of([&] { accumulate_confusion({cm({{1, 0}, {0, 1}}), cm({{1, 0}, {0, 1}}, {"1", "0"})}); }) ==
          Errc::LabelMismatch);
    CHECK(testing::error_code_of([] { accumulate_confusion({scalar(1, "x", 1)}); }) == Errc::NoConfusionRecords);
}

TEST_CASE("confusion additivity") {
    auto s = seedctl::make_stream(5);
    for (int i = 0; i < 100; ++i) {
        std::vector<EventRecord> a, b;
        auto make = [&] {
            std::vector<std::vector<std::uint64_t>> c(3, std::vector<std::uint64_t>(3));
            for (auto& row : c)
                for (auto& v : row) v = s.next_below(10);
            return EventRecord{1, 0, "cm", Confusion{{"x", "y", "z"}, c}};
        };
        for (auto k = s.next_below(4) + 1; k > 0; --k) a.push_back(make());
        for (auto k = s.next_below(4) + 1; k > 0; --k) b.push_back(make());
        auto ab = a;
        ab.insert(ab.end(), b.begin(), b.end());
        const auto ma = accumulate_confusion(a), mb = accumulate_confusion(b), mab = accumulate_confusion(ab);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) REQUIRE(mab.counts[r][c] == ma.counts[r][c] + mb.counts[r][c]);
    }
}
