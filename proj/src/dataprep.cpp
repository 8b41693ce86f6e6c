#include "repro/dataprep.hpp"

#include "repro/error.hpp"
#include "repro/seedctl.hpp"
#include "repro/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace repro::dataprep {

namespace {

const std::vector<std::string> kSplits{"train", "val", "test"};

bool hidden(const fs::path& p) {
    const auto name = p.filename().string();
    return !name.empty() && name.front() == '.';
}

std::vector<fs::directory_entry> sorted_entries(const fs::path& dir) {
    std::vector<fs::directory_entry> out;
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(dir, ec))
        if (!hidden(e.path())) out.push_back(e);
    if (ec) fail(Errc::IoFailure, dir.string() + ": " + ec.message());
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.path().filename() < b.path().filename(); });
    return out;
}

}  // namespace

DatasetFolderReport verify_folder_format(const fs::path& root) {
    std::error_code ec;
    if (!fs::is_directory(root, ec)) fail(Errc::NotADirectory, root.string());

    DatasetFolderReport report;
    auto violation = [&](const fs::path& p, const std::string& rule) {
        report.violations.push_back(p.lexically_relative(root).generic_string() + ": " + rule);
    };

    for (const auto& entry : sorted_entries(root)) {
        const auto name = entry.path().filename().string();
        if (!entry.is_directory()) {
            violation(entry.path(), "file at wrong depth (expected <split>/<class>/<file>)");
            continue;
        }
        if (std::find(kSplits.begin(), kSplits.end(), name) == kSplits.end()) {
            violation(entry.path(), "unrecognized split (expected train, val or test)");
            continue;
        }
        report.splits_found.push_back(name);
        auto& classes = report.classes_per_split[name];
        for (const auto& cls : sorted_entries(entry.path())) {
            if (!cls.is_directory()) {
                violation(cls.path(), "file at wrong depth (expected <split>/<class>/<file>)");
                continue;
            }
            const auto cls_name = cls.path().filename().string();
            classes.push_back(cls_name);
            std::uint64_t files = 0;
            for (const auto& f : sorted_entries(cls.path())) {
                if (f.is_directory())
                    violation(f.path(), "directory at wrong depth (classes cannot nest)");
                else
                    ++files;
            }
            report.file_counts[{name, cls_name}] = files;
            if (files == 0) violation(cls.path(), "empty class directory");
        }
    }

    std::sort(report.splits_found.begin(), report.splits_found.end(), [](const auto& a, const auto& b) {
        return std::find(kSplits.begin(), kSplits.end(), a) < std::find(kSplits.begin(), kSplits.end(), b);
    });
    if (!report.classes_per_split.count("train")) {
        violation(root / "train", "train split is required");
    } else {
        const auto& reference = report.classes_per_split["train"];
        for (const auto& split : report.splits_found) {
            if (split == "train") continue;
            if (report.classes_per_split[split] != reference)
                violation(root / split, "class set differs from train");
        }
    }
    return report;
}

void RunningStats::merge(const RunningStats& other) noexcept {
    if (other.n_ == 0) return;
    if (n_ == 0) {
        *this = other;
        return;
    }
    const double na = static_cast<double>(n_);
    const double nb = static_cast<double>(other.n_);
    const double total = na + nb;
    const double delta = other.mean_ - mean_;
    mean_ += delta * nb / total;
    m2_ += other.m2_ + delta * delta * na * nb / total;
    n_ += other.n_;
}

double RunningStats::std_sample() const noexcept {
    return n_ < 2 ? 0.0 : std::sqrt(std::max(0.0, m2_) / static_cast<double>(n_ - 1));
}

double RunningStats::std_population() const noexcept {
    return n_ < 1 ? 0.0 : std::sqrt(std::max(0.0, m2_) / static_cast<double>(n_));
}

ChannelStats::ChannelStats(std::size_t channels) : stats_(channels) {
    if (channels == 0) fail(Errc::ChannelMismatch, "channels must be positive");
}

void ChannelStats::push(std::span<const double> sample) {
    if (sample.size() != stats_.size())
        fail(Errc::ChannelMismatch,
             "expected " + std::to_string(stats_.size()) + " values, got " + std::to_string(sample.size()));
    for (double v : sample)
        if (!std::isfinite(v)) fail(Errc::NonFiniteSample);
    for (std::size_t c = 0; c < sample.size(); ++c) stats_[c].push(sample[c]);
}

void ChannelStats::merge(const ChannelStats& other) {
    if (other.stats_.size() != stats_.size()) fail(Errc::ChannelMismatch, "cannot merge");
    for (std::size_t c = 0; c < stats_.size(); ++c) stats_[c].merge(other.stats_[c]);
}

std::string ChannelStats::to_json() const {
    nlohmann::ordered_json doc = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < stats_.size(); ++c) {
        nlohmann::ordered_json ch;
        ch["n"] = stats_[c].count();
        ch["mean"] = stats_[c].mean();
        ch["std_sample"] = stats_[c].std_sample();
        ch["std_population"] = stats_[c].std_population();
        doc[std::to_string(c)] = std::move(ch);
    }
    return doc.dump(2) + "\n";
}

ChannelStats compute_mean_std(const SampleSource& source, std::size_t channels) {
    ChannelStats stats(channels);
    std::vector<double> sample;
    sample.reserve(channels);
    while (source(sample)) stats.push(sample);
    return stats;
}

struct NetpbmPixelStream::File {
    std::ifstream in;
};

namespace {

// Skips whitespace and '#' comments, then reads an unsigned decimal.
std::size_t read_header_number(std::istream& in, const fs::path& path) {
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string ignored;
            std::getline(in, ignored);
        } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            in.get();
        } else {
            break;
        }
    }
    std::size_t v = 0;
    bool any = false;
    while (in.peek() >= '0' && in.peek() <= '9') {
        v = v * 10 + static_cast<std::size_t>(in.get() - '0');
        any = true;
    }
    if (!any) fail(Errc::IoFailure, path.string() + ": malformed netpbm header");
    return v;
}

}  // namespace

NetpbmPixelStream::NetpbmPixelStream(const fs::path& path) : file_(std::make_unique<File>()) {
    file_->in.open(path, std::ios::binary);
    if (!file_->in) fail(Errc::IoFailure, "cannot open " + path.string());
    char magic[2] = {};
    file_->in.read(magic, 2);
    if (magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
        fail(Errc::IoFailure, path.string() + ": only binary PGM (P5) and PPM (P6) are supported");
    header_.channels = magic[1] == '5' ? 1 : 3;
    header_.width = read_header_number(file_->in, path);
    header_.height = read_header_number(file_->in, path);
    const auto maxval = read_header_number(file_->in, path);
    if (maxval == 0 || maxval > 65535) fail(Errc::IoFailure, path.string() + ": bad maxval");
    header_.maxval = static_cast<std::uint32_t>(maxval);
    file_->in.get();  // single whitespace before raster
    const std::size_t bytes_per_sample = header_.maxval < 256 ? 1 : 2;
    row_.resize(header_.width * header_.channels * bytes_per_sample);
    row_pos_ = row_.size();
}

NetpbmPixelStream::~NetpbmPixelStream() = default;

bool NetpbmPixelStream::refill_row() {
    if (rows_read_ >= header_.height) return false;
    file_->in.read(reinterpret_cast<char*>(row_.data()), static_cast<std::streamsize>(row_.size()));
    if (static_cast<std::size_t>(file_->in.gcount()) != row_.size())
        fail(Errc::IoFailure, "truncated netpbm raster");
    ++rows_read_;
    row_pos_ = 0;
    return true;
}

bool NetpbmPixelStream::next(std::vector<double>& pixel) {
    if (row_pos_ >= row_.size() && !refill_row()) return false;
    if (row_.empty()) return false;
    const bool wide = header_.maxval >= 256;
    const double scale = static_cast<double>(header_.maxval);
    pixel.resize(header_.channels);
    for (std::size_t c = 0; c < header_.channels; ++c) {
        std::uint32_t v = row_[row_pos_++];
        if (wide) v = (v << 8) | row_[row_pos_++];
        pixel[c] = static_cast<double>(v) / scale;
    }
    return true;
}

ChannelStats image_folder_stats(const fs::path& root, const std::string& split) {
    std::error_code ec;
    const fs::path split_dir = root / split;
    if (!fs::is_directory(split_dir, ec)) fail(Errc::NotADirectory, split_dir.string());
    std::vector<fs::path> images;
    for (const auto& cls : sorted_entries(split_dir)) {
        if (!cls.is_directory()) continue;
        for (const auto& f : sorted_entries(cls.path())) {
            const auto ext = f.path().extension().string();
            if (f.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) images.push_back(f.path());
        }
    }
    if (images.empty()) fail(Errc::EmptyInput, "no .pgm/.ppm images under " + split_dir.string());

    std::optional<ChannelStats> stats;
    std::vector<double> pixel;
    for (const auto& path : images) {
        NetpbmPixelStream stream(path);
        if (!stats) stats.emplace(stream.header().channels);
        if (stream.header().channels != stats->channels())
            fail(Errc::ChannelMismatch, path.string() + " has a different channel count");
        while (stream.next(pixel)) stats->push(pixel);
    }
    return *stats;
}

namespace {

std::size_t round_half_up(double v) { return static_cast<std::size_t>(std::floor(v + 0.5)); }

}  // namespace

Partition partition_train_val(const std::vector<LabeledItem>& items, double ratio, std::uint64_t seed,
                              bool stratified) {
    if (items.empty()) fail(Errc::EmptyInput);
    if (!(ratio > 0.0 && ratio < 1.0)) fail(Errc::DegenerateRatio, "ratio must lie in (0,1)");

    std::vector<std::vector<std::size_t>> groups;
    if (stratified) {
        std::map<std::string, std::size_t> group_of;
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (items[i].label.empty()) fail(Errc::InvalidSpec, "empty label for " + items[i].id);
            auto [it, inserted] = group_of.emplace(items[i].label, groups.size());
            if (inserted) groups.emplace_back();
            groups[it->second].push_back(i);
        }
    } else {
        groups.emplace_back(items.size());
        for (std::size_t i = 0; i < items.size(); ++i) groups[0][i] = i;
    }

    auto stream = seedctl::make_stream(seedctl::derive_subseed(seed, "split"));
    std::vector<bool> in_train(items.size(), false);
    for (auto& group : groups) {
        const std::size_t n = group.size();
        std::size_t take = std::min(n, round_half_up(ratio * static_cast<double>(n)));
        if (stratified && n >= 2 && take == 0) take = 1;
        stream.shuffle(std::span<std::size_t>(group));
        for (std::size_t k = 0; k < take; ++k) in_train[group[k]] = true;
    }

    Partition p;
    for (std::size_t i = 0; i < items.size(); ++i) (in_train[i] ? p.train : p.val).push_back(items[i].id);
    if (items.size() >= 2 && (p.train.empty() || p.val.empty()))
        fail(Errc::DegenerateRatio, "ratio " + format_double(ratio) + " leaves one side empty");
    return p;
}

namespace {

struct FamilyValidator {
    void operator()(const XorFamily&) const {}
    void operator()(const BlobsFamily& f) const {
        if (f.centers.empty()) fail(Errc::InvalidSpec, "blobs need at least one center");
        for (const auto& [x, y] : f.centers)
            if (!std::isfinite(x) || !std::isfinite(y)) fail(Errc::InvalidSpec, "blob center not finite");
        if (!(f.sigma > 0.0) || !std::isfinite(f.sigma)) fail(Errc::InvalidSpec, "blob sigma must be > 0");
    }
    void operator()(const SpiralFamily& f) const {
        if (!(f.turns > 0.0) || !std::isfinite(f.turns)) fail(Errc::InvalidSpec, "spiral turns must be > 0");
        if (!(f.noise_sigma >= 0.0) || !std::isfinite(f.noise_sigma))
            fail(Errc::InvalidSpec, "spiral noise must be >= 0");
    }
    void operator()(const DonutFamily& f) const {
        if (!(f.r_inner > 0.0 && f.r_inner < f.r_outer) || !std::isfinite(f.r_outer))
            fail(Errc::InvalidSpec, "donut requires 0 < r_inner < r_outer");
    }
};

}  // namespace

std::vector<Point2D> generate_2d(const Toy2DSpec& spec) {
    if (spec.n_points == 0) fail(Errc::InvalidSpec, "n_points must be positive");
    std::visit(FamilyValidator{}, spec.family);

    auto s = seedctl::make_stream(spec.seed);
    std::vector<Point2D> pts;
    pts.reserve(spec.n_points);
    constexpr double two_pi = 2.0 * std::numbers::pi;
    for (std::uint64_t i = 0; i < spec.n_points; ++i) {
        Point2D p;
        if (std::holds_alternative<XorFamily>(spec.family)) {
            p.x = s.next_unit_float();
            p.y = s.next_unit_float();
            p.label = xor_label(p.x, p.y);
        } else if (const auto* b = std::get_if<BlobsFamily>(&spec.family)) {
            const auto c = i % b->centers.size();
            p.x = b->centers[c].first + b->sigma * s.next_gaussian();
            p.y = b->centers[c].second + b->sigma * s.next_gaussian();
            p.label = static_cast<int>(c);
        } else if (const auto* sp = std::get_if<SpiralFamily>(&spec.family)) {
            // Two interleaved arms, the second rotated by pi.
            p.label = static_cast<int>(i % 2);
            const double t = s.next_unit_float();
            const double theta = two_pi * sp->turns * t + std::numbers::pi * p.label;
            p.x = t * std::cos(theta) + sp->noise_sigma * s.next_gaussian();
            p.y = t * std::sin(theta) + sp->noise_sigma * s.next_gaussian();
        } else {
            // Label 0 uniform in the inner disk, label 1 uniform in the ring.
            const auto& d = std::get<DonutFamily>(spec.family);
            p.label = static_cast<int>(i % 2);
            const double theta = two_pi * s.next_unit_float();
            const double v = s.next_unit_float();
            const double r = p.label == 0
                                 ? d.r_inner * std::sqrt(v)
                                 : std::sqrt(d.r_inner * d.r_inner +
                                             v * (d.r_outer * d.r_outer - d.r_inner * d.r_inner));
            p.x = r * std::cos(theta);
            p.y = r * std::sin(theta);
        }
        pts.push_back(p);
    }
    return pts;
}

std::string points_to_csv(const std::vector<Point2D>& points) {
    std::string out = "x,y,label\n";
    for (const auto& p : points)
        out += format_double(p.x) + "," + format_double(p.y) + "," + std::to_string(p.label) + "\n";
    return out;
}

std::vector<Point2D> points_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::vector<Point2D> pts;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line_no == 1 && line == "x,y,label") continue;
        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
        if (c2 == std::string::npos) fail(Errc::InvalidSpec, "line " + std::to_string(line_no) + ": expected x,y,label");
        auto x = parse_double(std::string_view(line).substr(0, c1));
        auto y = parse_double(std::string_view(line).substr(c1 + 1, c2 - c1 - 1));
        auto label = parse_i64(std::string_view(line).substr(c2 + 1));
        if (!x || !y || !label) fail(Errc::InvalidSpec, "line " + std::to_string(line_no) + ": not numeric");
        pts.push_back({*x, *y, static_cast<int>(*label)});
    }
    return pts;
}

}  // namespace repro::dataprep
