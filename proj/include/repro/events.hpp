#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace repro::events {

namespace fs = std::filesystem;

enum class EventKind { scalar, histogram, confusion, grid, text };

std::string_view to_string(EventKind k);

struct Histogram {
    std::vector<double> edges;          // B+1, strictly ascending
    std::vector<std::uint64_t> counts;  // B
    friend bool operator==(const Histogram&, const Histogram&) = default;
};

struct Confusion {
    std::vector<std::string> labels;                 // K
    std::vector<std::vector<std::uint64_t>> counts;  // K x K, row = true class
    friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct Grid {
    double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
    std::uint64_t rows = 0, cols = 0;
    std::vector<double> values;  // row-major, rows*cols, each in [0,1]
    friend bool operator==(const Grid&, const Grid&) = default;

    [[nodiscard]] double at(std::uint64_t r, std::uint64_t c) const { return values[r * cols + c]; }
};

// Alternative order matches EventKind.
using Payload = std::variant<double, Histogram, Confusion, Grid, std::string>;

struct EventRecord {
    std::uint64_t step = 0;
    std::uint64_t time_ms = 0;
    std::string tag;
    Payload payload;

    [[nodiscard]] EventKind kind() const { return static_cast<EventKind>(payload.index()); }
    friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

EventRecord scalar(std::uint64_t step, std::string tag, double value, std::uint64_t time_ms = 0);

// Throws InvalidPayload on shape/range violations and non-finite numbers.
void validate(const EventRecord& rec);

// One JSON object, no trailing newline. Field order: step,time_ms,tag,kind,payload.
std::string to_json_line(const EventRecord& rec);
// The same line without time_ms; used for reproducibility digests.
std::string to_canonical_line(const EventRecord& rec);
// Throws InvalidPayload when the text is not a valid record.
EventRecord parse_json_line(std::string_view line);

// Append-only writer. Each record goes out in a single write() of one full
// line. Opening an existing log trims a partial final line left by a crash
// and resumes per-tag step tracking.
class EventWriter {
public:
    explicit EventWriter(const fs::path& path);
    ~EventWriter();
    EventWriter(const EventWriter&) = delete;
    EventWriter& operator=(const EventWriter&) = delete;
    EventWriter(EventWriter&& other) noexcept;
    EventWriter& operator=(EventWriter&&) = delete;

    void append(const EventRecord& rec);

private:
    int fd_ = -1;
    fs::path path_;
    std::map<std::string, std::uint64_t> last_step_;
};

inline void append_event(EventWriter& log, const EventRecord& rec) { log.append(rec); }

enum class TailStatus { clean, truncated_tail_dropped };

struct ReadResult {
    std::vector<EventRecord> records;
    TailStatus tail = TailStatus::clean;
};

// Throws CorruptLog(line number, 1-based) when a malformed line is followed by
// a valid one.
ReadResult read_events(const fs::path& path);
ReadResult parse_events(std::string_view text);

// SHA-256 over canonical lines (LF-terminated), time_ms excluded.
std::string event_digest(const std::vector<EventRecord>& records);

// Last scalar value per tag, in log order.
std::map<std::string, double> last_scalars(const std::vector<EventRecord>& records);

struct AggregatePoint {
    std::uint64_t step = 0;
    double mean = 0, std = 0, min = 0, max = 0;
    std::uint64_t n = 0;
    friend bool operator==(const AggregatePoint&, const AggregatePoint&) = default;
};

struct AggregateSeries {
    std::string tag;
    std::vector<AggregatePoint> points;
    friend bool operator==(const AggregateSeries&, const AggregateSeries&) = default;
};

// Union-of-steps alignment; sample std (n-1), 0 when n == 1. When a run logs
// the same (tag, step) more than once the last value counts.
AggregateSeries aggregate(const std::vector<std::vector<EventRecord>>& run_logs, const std::string& tag);

// Header step,mean,std,min,max,n; shortest round-trip number formatting.
std::string aggregate_csv(const AggregateSeries& series);

std::vector<std::string> scalar_tags(const std::vector<std::vector<EventRecord>>& run_logs);

struct ConfusionMatrix {
    std::vector<std::string> labels;
    std::vector<std::vector<std::uint64_t>> counts;

    [[nodiscard]] std::uint64_t total() const;
    [[nodiscard]] std::uint64_t trace() const;
    [[nodiscard]] std::optional<double> accuracy() const;
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

ConfusionMatrix accumulate_confusion(const std::vector<EventRecord>& records);

}  // namespace repro::events
