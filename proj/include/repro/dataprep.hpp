#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace repro::dataprep {

namespace fs = std::filesystem;

struct DatasetFolderReport {
    std::vector<std::string> splits_found;
    std::map<std::string, std::vector<std::string>> classes_per_split;
    std::map<std::pair<std::string, std::string>, std::uint64_t> file_counts;
    std::vector<std::string> violations;  // "<path>: <rule>"

    [[nodiscard]] bool valid() const { return violations.empty(); }
};

// Expects <root>/<split>/<class>/<files>, split in {train, val, test}, train required.
DatasetFolderReport verify_folder_format(const fs::path& root);

// Welford accumulator for one channel.
class RunningStats {
public:
    void push(double x) noexcept {
        ++n_;
        const double delta = x - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_ += delta * (x - mean_);
    }

    // Parallel combination (Chan et al.); merging an empty side is a no-op.
    void merge(const RunningStats& other) noexcept;

    [[nodiscard]] std::uint64_t count() const noexcept { return n_; }
    [[nodiscard]] double mean() const noexcept { return mean_; }
    [[nodiscard]] double m2() const noexcept { return m2_; }
    // 0 for n < 2.
    [[nodiscard]] double std_sample() const noexcept;
    // 0 for n < 1.
    [[nodiscard]] double std_population() const noexcept;

private:
    std::uint64_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

class ChannelStats {
public:
    explicit ChannelStats(std::size_t channels);

    // Throws ChannelMismatch / NonFiniteSample; a rejected sample leaves the state unchanged.
    void push(std::span<const double> sample);
    // Throws ChannelMismatch when channel counts differ.
    void merge(const ChannelStats& other);

    [[nodiscard]] std::size_t channels() const noexcept { return stats_.size(); }
    [[nodiscard]] const RunningStats& channel(std::size_t c) const { return stats_.at(c); }

    // {"0": {"n":..,"mean":..,"std_sample":..,"std_population":..}, ...}
    [[nodiscard]] std::string to_json() const;

private:
    std::vector<RunningStats> stats_;
};

// Pulls one sample at a time; returns false at end of stream.
using SampleSource = std::function<bool(std::vector<double>& sample)>;

ChannelStats compute_mean_std(const SampleSource& source, std::size_t channels);

struct ImageHeader {
    std::size_t width = 0, height = 0, channels = 0;
    std::uint32_t maxval = 0;
};

// Streams pixels of a binary PGM (P5) or PPM (P6) row by row, scaled to
// [0,1] by maxval. Memory use is one row.
class NetpbmPixelStream {
public:
    explicit NetpbmPixelStream(const fs::path& path);
    ~NetpbmPixelStream();
    NetpbmPixelStream(const NetpbmPixelStream&) = delete;
    NetpbmPixelStream& operator=(const NetpbmPixelStream&) = delete;

    [[nodiscard]] const ImageHeader& header() const noexcept { return header_; }
    bool next(std::vector<double>& pixel);

private:
    bool refill_row();

    struct File;
    std::unique_ptr<File> file_;
    ImageHeader header_;
    std::vector<unsigned char> row_;
    std::size_t row_pos_ = 0;
    std::size_t rows_read_ = 0;
};

// All .pgm/.ppm files of one split, streamed back to back.
ChannelStats image_folder_stats(const fs::path& root, const std::string& split = "train");

struct LabeledItem {
    std::string id;
    std::string label;
};

struct Partition {
    std::vector<std::string> train;
    std::vector<std::string> val;
};

// Round-half-up of ratio*n (per class when stratified, train >= 1 for classes
// of at least 2), seeded shuffle for selection. Classes are visited in order of
// first appearance; ids within each side keep their input order.
Partition partition_train_val(const std::vector<LabeledItem>& items, double ratio, std::uint64_t seed,
                              bool stratified);

struct Point2D {
    double x = 0, y = 0;
    int label = 0;
    friend bool operator==(const Point2D&, const Point2D&) = default;
};

struct XorFamily {};
struct BlobsFamily {
    std::vector<std::pair<double, double>> centers;
    double sigma = 0.1;
};
struct SpiralFamily {
    double turns = 1.5;
    double noise_sigma = 0.02;
};
struct DonutFamily {
    double r_inner = 0.5;
    double r_outer = 1.0;
};

using Toy2DFamily = std::variant<XorFamily, BlobsFamily, SpiralFamily, DonutFamily>;

struct Toy2DSpec {
    Toy2DFamily family;
    std::uint64_t n_points = 0;
    std::uint64_t seed = 0;
};

inline int xor_label(double x, double y) { return ((x > 0.5) != (y > 0.5)) ? 1 : 0; }

// Throws InvalidSpec.
std::vector<Point2D> generate_2d(const Toy2DSpec& spec);

// Header x,y,label.
std::string points_to_csv(const std::vector<Point2D>& points);
std::vector<Point2D> points_from_csv(const std::string& text);

}  // namespace repro::dataprep
