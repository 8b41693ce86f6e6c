#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

namespace repro {

namespace fs = std::filesystem;

using TimePoint = std::chrono::system_clock::time_point;
using Clock = std::function<TimePoint()>;

Clock system_clock();

// RFC 3339 UTC with millisecond precision, e.g. 2018-04-17T09:30:00.125Z
std::string format_rfc3339(TimePoint t);
std::optional<TimePoint> parse_rfc3339(std::string_view text);

// UTC YYYYMMDDThhmmssmmm; sorts lexicographically in time order.
std::string format_compact(TimePoint t);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
std::optional<double> parse_double(std::string_view text);
std::optional<std::uint64_t> parse_u64(std::string_view text);
std::optional<std::int64_t> parse_i64(std::string_view text);

class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(std::string_view bytes);
    std::string hex_digest();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file_hex(const fs::path& path);

bool is_lower_hex(std::string_view s, std::size_t length);

std::string read_file(const fs::path& path);
// Write to a sibling temp file then rename over the target.
void write_file_atomic(const fs::path& path, std::string_view content);

}  // namespace repro
