#include "repro/events.hpp"

#include "repro/error.hpp"
#include "repro/util.hpp"

#include <json.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <set>

namespace repro::events {

using ojson = nlohmann::ordered_json;
using nlohmann::json;

std::string_view to_string(EventKind k) {
    switch (k) {
        case EventKind::scalar: return "scalar";
        case EventKind::histogram: return "histogram";
        case EventKind::confusion: return "confusion";
        case EventKind::grid: return "grid";
        case EventKind::text: return "text";
    }
    return "scalar";
}

EventRecord scalar(std::uint64_t step, std::string tag, double value, std::uint64_t time_ms) {
    return EventRecord{step, time_ms, std::move(tag), Payload{value}};
}

namespace {

[[noreturn]] void invalid(const std::string& why) { fail(Errc::InvalidPayload, why); }

void check_finite(double v, const char* what) {
    if (!std::isfinite(v)) invalid(std::string(what) + " must be finite");
}

struct Validator {
    void operator()(double v) const { check_finite(v, "scalar"); }
    void operator()(const Histogram& h) const {
        if (h.edges.size() < 2) invalid("histogram needs at least two edges");
        if (h.counts.size() + 1 != h.edges.size()) invalid("histogram needs B+1 edges for B counts");
        for (double e : h.edges) check_finite(e, "histogram edge");
        for (std::size_t i = 1; i < h.edges.size(); ++i)
            if (!(h.edges[i - 1] < h.edges[i])) invalid("histogram edges must be strictly ascending");
    }
    void operator()(const Confusion& c) const {
        const auto k = c.labels.size();
        if (k == 0) invalid("confusion matrix needs at least one label");
        if (c.counts.size() != k) invalid("confusion matrix must be K x K");
        for (const auto& row : c.counts)
            if (row.size() != k) invalid("confusion matrix must be K x K");
    }
    void operator()(const Grid& g) const {
        check_finite(g.x_min, "grid x_min");
        check_finite(g.x_max, "grid x_max");
        check_finite(g.y_min, "grid y_min");
        check_finite(g.y_max, "grid y_max");
        if (g.x_min > g.x_max || g.y_min > g.y_max) invalid("grid bounds are inverted");
        if (g.rows == 0 || g.cols == 0) invalid("grid rows and cols must be positive");
        if (g.values.size() != g.rows * g.cols) invalid("grid needs rows*cols values");
        for (double v : g.values)
            if (!(v >= 0.0 && v <= 1.0)) invalid("grid values must lie in [0,1]");
    }
    void operator()(const std::string&) const {}
};

ojson payload_json(const Payload& p) {
    return std::visit(
        [](const auto& v) -> ojson {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, double>) {
                return v;
            } else if constexpr (std::is_same_v<T, Histogram>) {
                ojson o;
                o["edges"] = v.edges;
                o["counts"] = v.counts;
                return o;
            } else if constexpr (std::is_same_v<T, Confusion>) {
                ojson o;
                o["labels"] = v.labels;
                o["counts"] = v.counts;
                return o;
            } else if constexpr (std::is_same_v<T, Grid>) {
                ojson o;
                o["x_min"] = v.x_min;
                o["x_max"] = v.x_max;
                o["y_min"] = v.y_min;
                o["y_max"] = v.y_max;
                o["rows"] = v.rows;
                o["cols"] = v.cols;
                o["values"] = v.values;
                return o;
            } else {
                return v;
            }
        },
        p);
}

std::string render_line(const EventRecord& rec, bool with_time) {
    ojson o;
    o["step"] = rec.step;
    if (with_time) o["time_ms"] = rec.time_ms;
    o["tag"] = rec.tag;
    o["kind"] = std::string(to_string(rec.kind()));
    o["payload"] = payload_json(rec.payload);
    return o.dump();
}

void expect_keys(const json& o, std::initializer_list<const char*> keys) {
    if (!o.is_object() || o.size() != keys.size()) invalid("unexpected key set");
    for (const char* k : keys)
        if (!o.contains(k)) invalid(std::string("missing key ") + k);
}

double number(const json& v) {
    if (!v.is_number()) invalid("expected number");
    return v.get<double>();
}

std::uint64_t count(const json& v) {
    if (!v.is_number_unsigned()) invalid("expected non-negative integer");
    return v.get<std::uint64_t>();
}

std::vector<double> numbers(const json& v) {
    if (!v.is_array()) invalid("expected array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& x : v) out.push_back(number(x));
    return out;
}

std::vector<std::uint64_t> counts(const json& v) {
    if (!v.is_array()) invalid("expected array");
    std::vector<std::uint64_t> out;
    out.reserve(v.size());
    for (const auto& x : v) out.push_back(count(x));
    return out;
}

}  // namespace

void validate(const EventRecord& rec) {
    if (rec.tag.empty()) invalid("tag must be non-empty");
    std::visit(Validator{}, rec.payload);
}

std::string to_json_line(const EventRecord& rec) { return render_line(rec, true); }
std::string to_canonical_line(const EventRecord& rec) { return render_line(rec, false); }

EventRecord parse_json_line(std::string_view line) {
    json o;
    try {
        o = json::parse(line.begin(), line.end());
    } catch (const json::exception& e) {
        invalid(e.what());
    }
    expect_keys(o, {"step", "time_ms", "tag", "kind", "payload"});
    EventRecord rec;
    rec.step = count(o["step"]);
    rec.time_ms = count(o["time_ms"]);
    if (!o["tag"].is_string() || !o["kind"].is_string()) invalid("tag and kind must be strings");
    rec.tag = o["tag"].get<std::string>();
    const auto kind = o["kind"].get<std::string>();
    const auto& p = o["payload"];
    if (kind == "scalar") {
        rec.payload = number(p);
    } else if (kind == "histogram") {
        expect_keys(p, {"edges", "counts"});
        rec.payload = Histogram{numbers(p["edges"]), counts(p["counts"])};
    } else if (kind == "confusion") {
        expect_keys(p, {"labels", "counts"});
        Confusion c;
        if (!p["labels"].is_array()) invalid("labels must be an array");
        for (const auto& l : p["labels"]) {
            if (!l.is_string()) invalid("labels must be strings");
            c.labels.push_back(l.get<std::string>());
        }
        if (!p["counts"].is_array()) invalid("counts must be an array");
        for (const auto& row : p["counts"]) c.counts.push_back(counts(row));
        rec.payload = std::move(c);
    } else if (kind == "grid") {
        expect_keys(p, {"x_min", "x_max", "y_min", "y_max", "rows", "cols", "values"});
        Grid g;
        g.x_min = number(p["x_min"]);
        g.x_max = number(p["x_max"]);
        g.y_min = number(p["y_min"]);
        g.y_max = number(p["y_max"]);
        g.rows = count(p["rows"]);
        g.cols = count(p["cols"]);
        g.values = numbers(p["values"]);
        rec.payload = std::move(g);
    } else if (kind == "text") {
        if (!p.is_string()) invalid("text payload must be a string");
        rec.payload = p.get<std::string>();
    } else {
        invalid("unknown kind " + kind);
    }
    validate(rec);
    return rec;
}

EventWriter::EventWriter(const fs::path& path) : path_(path) {
    std::error_code ec;
    if (fs::exists(path, ec)) {
        std::string text = read_file(path);
        if (!text.empty() && text.back() != '\n') {
            const auto keep = text.rfind('\n');
            const auto new_size = keep == std::string::npos ? 0 : keep + 1;
            fs::resize_file(path, new_size, ec);
            if (ec) fail(Errc::IoFailure, path.string() + ": " + ec.message());
            text.resize(new_size);
        }
        for (const auto& rec : parse_events(text).records) last_step_[rec.tag] = rec.step;
    }
    fd_ = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) fail(Errc::IoFailure, path.string() + ": " + std::strerror(errno));
}

EventWriter::~EventWriter() {
    if (fd_ >= 0) ::close(fd_);
}

EventWriter::EventWriter(EventWriter&& other) noexcept
    : fd_(other.fd_), path_(std::move(other.path_)), last_step_(std::move(other.last_step_)) {
    other.fd_ = -1;
}

void EventWriter::append(const EventRecord& rec) {
    validate(rec);
    if (auto it = last_step_.find(rec.tag); it != last_step_.end() && rec.step < it->second)
        fail(Errc::StepRegression,
             rec.tag + " step " + std::to_string(rec.step) + " < " + std::to_string(it->second));
    const std::string line = to_json_line(rec) + "\n";
    ssize_t n;
    do {
        n = ::write(fd_, line.data(), line.size());
    } while (n < 0 && errno == EINTR);
    if (n != static_cast<ssize_t>(line.size()))
        fail(Errc::IoFailure, path_.string() + ": short write");
    last_step_[rec.tag] = rec.step;
}

ReadResult parse_events(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            lines.push_back(text.substr(pos));
            break;
        }
        lines.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }

    ReadResult result;
    std::optional<std::size_t> bad_line;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        try {
            auto rec = parse_json_line(lines[i]);
            if (bad_line) fail(Errc::CorruptLog, "line " + std::to_string(*bad_line + 1));
            result.records.push_back(std::move(rec));
        } catch (const Error& e) {
            if (e.code() == Errc::CorruptLog) throw;
            if (!bad_line) bad_line = i;
            else fail(Errc::CorruptLog, "line " + std::to_string(*bad_line + 1));
        }
    }
    if (bad_line) result.tail = TailStatus::truncated_tail_dropped;
    return result;
}

ReadResult read_events(const fs::path& path) { return parse_events(read_file(path)); }

std::string event_digest(const std::vector<EventRecord>& records) {
    Sha256 h;
    for (const auto& rec : records) {
        h.update(to_canonical_line(rec));
        h.update("\n");
    }
    return h.hex_digest();
}

std::map<std::string, double> last_scalars(const std::vector<EventRecord>& records) {
    std::map<std::string, double> out;
    for (const auto& rec : records)
        if (const double* v = std::get_if<double>(&rec.payload)) out[rec.tag] = *v;
    return out;
}

AggregateSeries aggregate(const std::vector<std::vector<EventRecord>>& run_logs, const std::string& tag) {
    std::map<std::uint64_t, std::vector<double>> by_step;
    for (const auto& log : run_logs) {
        std::map<std::uint64_t, double> run_values;
        for (const auto& rec : log) {
            if (rec.tag != tag) continue;
            if (const double* v = std::get_if<double>(&rec.payload)) run_values[rec.step] = *v;
        }
        for (const auto& [step, v] : run_values) by_step[step].push_back(v);
    }
    if (by_step.empty()) fail(Errc::TagNotFound, tag);

    AggregateSeries series;
    series.tag = tag;
    for (auto& [step, values] : by_step) {
        // Sorting first makes the floating-point sums independent of run order.
        std::sort(values.begin(), values.end());
        AggregatePoint pt;
        pt.step = step;
        pt.n = values.size();
        pt.min = values.front();
        pt.max = values.back();
        double sum = 0;
        for (double v : values) sum += v;
        pt.mean = std::clamp(sum / static_cast<double>(pt.n), pt.min, pt.max);
        if (pt.n > 1) {
            double ss = 0;
            for (double v : values) ss += (v - pt.mean) * (v - pt.mean);
            pt.std = std::sqrt(ss / static_cast<double>(pt.n - 1));
        }
        series.points.push_back(pt);
    }
    return series;
}

std::string aggregate_csv(const AggregateSeries& series) {
    std::string out = "step,mean,std,min,max,n\n";
    for (const auto& p : series.points) {
        out += std::to_string(p.step) + "," + format_double(p.mean) + "," + format_double(p.std) + "," +
               format_double(p.min) + "," + format_double(p.max) + "," + std::to_string(p.n) + "\n";
    }
    return out;
}

std::vector<std::string> scalar_tags(const std::vector<std::vector<EventRecord>>& run_logs) {
    std::set<std::string> tags;
    for (const auto& log : run_logs)
        for (const auto& rec : log)
            if (rec.kind() == EventKind::scalar) tags.insert(rec.tag);
    return {tags.begin(), tags.end()};
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts)
        for (auto c : row) t += c;
    return t;
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
    return t;
}

std::optional<double> ConfusionMatrix::accuracy() const {
    const auto t = total();
    if (t == 0) return std::nullopt;
    return static_cast<double>(trace()) / static_cast<double>(t);
}

ConfusionMatrix accumulate_confusion(const std::vector<EventRecord>& records) {
    std::optional<ConfusionMatrix> acc;
    for (const auto& rec : records) {
        const auto* c = std::get_if<Confusion>(&rec.payload);
        if (!c) continue;
        if (!acc) {
            acc = ConfusionMatrix{c->labels, c->counts};
            continue;
        }
        if (c->labels != acc->labels) fail(Errc::LabelMismatch, rec.tag);
        for (std::size_t i = 0; i < c->counts.size(); ++i)
            for (std::size_t j = 0; j < c->counts[i].size(); ++j) acc->counts[i][j] += c->counts[i][j];
    }
    if (!acc) fail(Errc::NoConfusionRecords);
    return *acc;
}

}  // namespace repro::events
