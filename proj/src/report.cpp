#include "repro/report.hpp"

#include "repro/error.hpp"
#include "repro/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

namespace repro::report {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    std::string s = buf;
    if (s == "-0.00") s = "0.00";
    return s;
}

std::string tick(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string hex(const Rgb& c) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
    return buf;
}

int lerp(int a, int b, double t) { return static_cast<int>(std::lround(a + (b - a) * t)); }

Rgb mix(const Rgb& a, const Rgb& b, double t) { return {lerp(a.r, b.r, t), lerp(a.g, b.g, t), lerp(a.b, b.b, t)}; }

std::string svg_open(double w, double h) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
           "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\" font-family=\"sans-serif\" font-size=\"11\">\n" +
           "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
}

std::string text(double x, double y, const std::string& s, const std::string& anchor = "middle",
                 const std::string& extra = {}) {
    return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor + "\"" + extra + ">" +
           escape(s) + "</text>\n";
}

struct Range {
    double lo, hi;
};

Range widen(double lo, double hi) {
    if (!(lo < hi)) return {lo - 0.5, hi + 0.5};
    return {lo, hi};
}

}  // namespace

std::string file_stem(const std::string& tag) {
    std::string out;
    for (char c : tag) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
                        c == '_' || c == '-';
        out += ok ? c : '_';
    }
    return out.empty() ? "_" : out;
}

Rgb sequential_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return mix({255, 255, 255}, {8, 48, 107}, t);
}

Rgb diverging_color(double v) {
    v = std::clamp(v, 0.0, 1.0);
    const Rgb blue{33, 102, 172}, white{255, 255, 255}, red{178, 24, 43};
    if (v < 0.5) return mix(blue, white, v / 0.5);
    if (v > 0.5) return mix(white, red, (v - 0.5) / 0.5);
    return white;
}

Artifact render_series(const std::vector<events::AggregateSeries>& series, Band band) {
    if (series.empty()) fail(Errc::EmptySeries, "no series");
    for (const auto& s : series)
        if (s.points.empty()) fail(Errc::EmptySeries, s.tag);

    Artifact art;
    if (series.size() == 1) {
        art.csv = events::aggregate_csv(series[0]);
    } else {
        art.csv = "tag,step,mean,std,min,max,n\n";
        for (const auto& s : series) {
            const auto body = events::aggregate_csv(s);
            std::istringstream lines(body.substr(body.find('\n') + 1));
            for (std::string line; std::getline(lines, line);) art.csv += s.tag + "," + line + "\n";
        }
    }

    double x0 = series[0].points.front().step, x1 = x0;
    double y0 = series[0].points.front().mean, y1 = y0;
    for (const auto& s : series) {
        for (const auto& p : s.points) {
            x0 = std::min(x0, static_cast<double>(p.step));
            x1 = std::max(x1, static_cast<double>(p.step));
            const double lo = band == Band::std1 ? p.mean - p.std : p.mean;
            const double hi = band == Band::std1 ? p.mean + p.std : p.mean;
            y0 = std::min(y0, lo);
            y1 = std::max(y1, hi);
        }
    }
    const Range xr = widen(x0, x1), yr = widen(y0, y1);
    constexpr double W = 640, H = 400, L = 70, R = 20, T = 30, B = 50;
    const double pw = W - L - R, ph = H - T - B;
    auto sx = [&](double x) { return L + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
    auto sy = [&](double y) { return T + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };

    std::string svg = svg_open(W, H);
    svg += "<rect x=\"" + num(L) + "\" y=\"" + num(T) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
           "\" fill=\"none\" stroke=\"#333333\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = xr.lo + (xr.hi - xr.lo) * i / 4.0;
        const double yv = yr.lo + (yr.hi - yr.lo) * i / 4.0;
        svg += text(sx(xv), T + ph + 16, tick(xv));
        svg += text(L - 6, sy(yv) + 4, tick(yv), "end");
    }
    std::string title;
    for (std::size_t k = 0; k < series.size(); ++k) title += (k ? ", " : "") + series[k].tag;
    svg += text(L + pw / 2, H - 12, "step");
    svg += text(16, T + ph / 2, title, "middle", " transform=\"rotate(-90 16 " + num(T + ph / 2) + ")\"");

    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& pts = series[k].points;
        const std::string color = kPalette[k % std::size(kPalette)];
        if (band == Band::std1) {
            std::string d;
            for (std::size_t i = 0; i < pts.size(); ++i)
                d += (i ? " L" : "M") + num(sx(pts[i].step)) + "," + num(sy(pts[i].mean + pts[i].std));
            for (std::size_t i = pts.size(); i-- > 0;)
                d += " L" + num(sx(pts[i].step)) + "," + num(sy(pts[i].mean - pts[i].std));
            svg += "<path class=\"band\" d=\"" + d + " Z\" fill=\"" + color +
                   "\" fill-opacity=\"0.25\" stroke=\"none\"/>\n";
        }
        std::string d;
        for (std::size_t i = 0; i < pts.size(); ++i)
            d += (i ? " L" : "M") + num(sx(pts[i].step)) + "," + num(sy(pts[i].mean));
        svg += "<path class=\"mean\" d=\"" + d + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
        if (pts.size() == 1)
            svg += "<circle cx=\"" + num(sx(pts[0].step)) + "\" cy=\"" + num(sy(pts[0].mean)) + "\" r=\"3\" fill=\"" +
                   color + "\"/>\n";
        svg += text(L + pw - 4, T + 14 + 14 * static_cast<double>(k), series[k].tag, "end",
                    " fill=\"" + color + "\"");
    }
    svg += "</svg>\n";
    art.svg = std::move(svg);
    return art;
}

Artifact render_confusion(const events::ConfusionMatrix& cm) {
    const std::size_t k = cm.labels.size();
    std::uint64_t max_cell = 0;
    for (const auto& row : cm.counts)
        for (auto c : row) max_cell = std::max(max_cell, c);

    Artifact art;
    for (const auto& l : cm.labels) art.csv += "," + l;
    art.csv += "\n";
    for (std::size_t i = 0; i < k; ++i) {
        art.csv += cm.labels[i];
        for (auto c : cm.counts[i]) art.csv += "," + std::to_string(c);
        art.csv += "\n";
    }

    constexpr double cell = 48, L = 90, T = 70;
    const double W = L + cell * static_cast<double>(k) + 20, H = T + cell * static_cast<double>(k) + 20;
    std::string svg = svg_open(W, H);
    if (auto acc = cm.accuracy()) svg += text(W / 2, 18, "accuracy " + tick(*acc));
    svg += text(L + cell * static_cast<double>(k) / 2, T - 30, "predicted");
    svg += text(16, T + cell * static_cast<double>(k) / 2, "true", "middle",
                " transform=\"rotate(-90 16 " + num(T + cell * static_cast<double>(k) / 2) + ")\"");
    for (std::size_t j = 0; j < k; ++j)
        svg += text(L + cell * (static_cast<double>(j) + 0.5), T - 8, cm.labels[j]);
    for (std::size_t i = 0; i < k; ++i) {
        const double y = T + cell * static_cast<double>(i);
        svg += text(L - 6, y + cell / 2 + 4, cm.labels[i], "end");
        for (std::size_t j = 0; j < k; ++j) {
            const double x = L + cell * static_cast<double>(j);
            const auto c = cm.counts[i][j];
            const double t = max_cell == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(max_cell);
            svg += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(cell) + "\" height=\"" +
                   num(cell) + "\" fill=\"" + hex(sequential_color(t)) + "\" stroke=\"#cccccc\"/>\n";
            svg += text(x + cell / 2, y + cell / 2 + 4, std::to_string(c), "middle",
                        t > 0.5 ? " fill=\"#ffffff\"" : " fill=\"#000000\"");
        }
    }
    svg += "</svg>\n";
    art.svg = std::move(svg);
    return art;
}

Artifact render_grid(const events::Grid& grid, std::span<const dataprep::Point2D> overlay) {
    Artifact art;
    art.csv = "row,col,x,y,value\n";
    const double dx = (grid.x_max - grid.x_min) / static_cast<double>(std::max<std::uint64_t>(grid.cols, 1));
    const double dy = (grid.y_max - grid.y_min) / static_cast<double>(std::max<std::uint64_t>(grid.rows, 1));
    for (std::uint64_t r = 0; r < grid.rows; ++r)
        for (std::uint64_t c = 0; c < grid.cols; ++c)
            art.csv += std::to_string(r) + "," + std::to_string(c) + "," +
                       format_double(grid.x_min + (static_cast<double>(c) + 0.5) * dx) + "," +
                       format_double(grid.y_min + (static_cast<double>(r) + 0.5) * dy) + "," +
                       format_double(grid.at(r, c)) + "\n";

    constexpr double P = 320, L = 60, T = 20, B = 40;
    const double W = L + P + 20, H = T + P + B;
    const double cw = P / static_cast<double>(std::max<std::uint64_t>(grid.cols, 1));
    const double ch = P / static_cast<double>(std::max<std::uint64_t>(grid.rows, 1));
    std::string svg = svg_open(W, H);
    for (std::uint64_t r = 0; r < grid.rows; ++r) {
        const double y = T + P - ch * static_cast<double>(r + 1);
        for (std::uint64_t c = 0; c < grid.cols; ++c) {
            svg += "<rect x=\"" + num(L + cw * static_cast<double>(c)) + "\" y=\"" + num(y) + "\" width=\"" +
                   num(cw) + "\" height=\"" + num(ch) + "\" fill=\"" + hex(diverging_color(grid.at(r, c))) +
                   "\"/>\n";
        }
    }
    svg += "<rect x=\"" + num(L) + "\" y=\"" + num(T) + "\" width=\"" + num(P) + "\" height=\"" + num(P) +
           "\" fill=\"none\" stroke=\"#333333\"/>\n";
    const double xs = grid.x_max - grid.x_min, ys = grid.y_max - grid.y_min;
    for (const auto& p : overlay) {
        if (!(xs > 0) || !(ys > 0)) break;
        const double px = L + (p.x - grid.x_min) / xs * P;
        const double py = T + P - (p.y - grid.y_min) / ys * P;
        svg += "<circle cx=\"" + num(px) + "\" cy=\"" + num(py) + "\" r=\"2\" fill=\"" +
               (p.label == 1 ? "#67001f" : "#053061") + "\" stroke=\"#ffffff\" stroke-width=\"0.5\"/>\n";
    }
    svg += text(L, T + P + 16, tick(grid.x_min), "start");
    svg += text(L + P, T + P + 16, tick(grid.x_max), "end");
    svg += text(L - 6, T + P, tick(grid.y_min), "end");
    svg += text(L - 6, T + 10, tick(grid.y_max), "end");
    svg += "</svg>\n";
    art.svg = std::move(svg);
    return art;
}

Artifact render_histograms(const std::string& tag,
                           const std::vector<std::pair<std::string, events::Histogram>>& ridges) {
    Artifact art;
    art.csv = "ridge,bin_lo,bin_hi,count\n";
    double lo = 0, hi = 1;
    bool first = true;
    for (const auto& [label, h] : ridges) {
        for (std::size_t b = 0; b < h.counts.size(); ++b)
            art.csv += label + "," + format_double(h.edges[b]) + "," + format_double(h.edges[b + 1]) + "," +
                       std::to_string(h.counts[b]) + "\n";
        if (h.edges.empty()) continue;
        lo = first ? h.edges.front() : std::min(lo, h.edges.front());
        hi = first ? h.edges.back() : std::max(hi, h.edges.back());
        first = false;
    }
    const Range xr = widen(lo, hi);

    constexpr double P = 480, L = 80, T = 30, ridge_h = 60, peak = 50;
    const double H = T + ridge_h * static_cast<double>(ridges.size()) + 30, W = L + P + 20;
    auto sx = [&](double x) { return L + (x - xr.lo) / (xr.hi - xr.lo) * P; };
    std::string svg = svg_open(W, H);
    svg += text(W / 2, 18, tag);
    for (std::size_t k = 0; k < ridges.size(); ++k) {
        const auto& [label, h] = ridges[k];
        const double base = T + ridge_h * static_cast<double>(k + 1);
        const auto max_count = h.counts.empty() ? 0 : *std::max_element(h.counts.begin(), h.counts.end());
        svg += text(L - 6, base, label, "end");
        for (std::size_t b = 0; b < h.counts.size(); ++b) {
            const double bh =
                max_count == 0 ? 0.0 : peak * static_cast<double>(h.counts[b]) / static_cast<double>(max_count);
            svg += "<rect x=\"" + num(sx(h.edges[b])) + "\" y=\"" + num(base - bh) + "\" width=\"" +
                   num(sx(h.edges[b + 1]) - sx(h.edges[b])) + "\" height=\"" + num(bh) + "\" fill=\"" +
                   kPalette[k % std::size(kPalette)] + "\" fill-opacity=\"0.6\" stroke=\"#333333\"/>\n";
        }
        svg += "<line x1=\"" + num(L) + "\" y1=\"" + num(base) + "\" x2=\"" + num(L + P) + "\" y2=\"" + num(base) +
               "\" stroke=\"#999999\"/>\n";
    }
    svg += text(L, H - 10, tick(xr.lo), "start");
    svg += text(L + P, H - 10, tick(xr.hi), "end");
    svg += "</svg>\n";
    art.svg = std::move(svg);
    return art;
}

namespace {

class BundleWriter {
public:
    explicit BundleWriter(fs::path dir) : dir_(std::move(dir)) {}

    // Returns the stem actually used, unique within the bundle.
    std::string write(const std::string& prefix, const std::string& tag, const Artifact& art) {
        std::string stem = prefix + "-" + file_stem(tag);
        for (int i = 2; used_.count(stem); ++i) stem = prefix + "-" + file_stem(tag) + "-" + std::to_string(i);
        used_.insert(stem);
        write_file_atomic(dir_ / (stem + ".svg"), art.svg);
        write_file_atomic(dir_ / (stem + ".csv"), art.csv);
        files_.push_back(stem + ".svg");
        files_.push_back(stem + ".csv");
        return stem;
    }

    void write_raw(const std::string& name, const std::string& content) {
        write_file_atomic(dir_ / name, content);
        files_.push_back(name);
    }

    std::vector<fs::path> files() const { return files_; }

private:
    fs::path dir_;
    std::set<std::string> used_;
    std::vector<fs::path> files_;
};

std::string figure(const std::string& heading, const std::string& stem) {
    return "<section>\n<h2>" + escape(heading) + "</h2>\n<img src=\"" + escape(stem) + ".svg\" alt=\"" +
           escape(heading) + "\">\n<p><a href=\"" + escape(stem) + ".csv\">" + escape(stem) + ".csv</a></p>\n" +
           "</section>\n";
}

}  // namespace

ReportBundle build_report(const fs::path& batch_dir, const fs::path& out_dir) {
    const auto runs = runner::list_run_dirs(batch_dir);
    if (runs.empty()) fail(Errc::NoRunsFound, batch_dir.string());

    std::vector<std::vector<events::EventRecord>> logs;
    for (const auto& run : runs) {
        const auto path = run / "events.jsonl";
        logs.push_back(fs::exists(path) ? events::read_events(path).records : std::vector<events::EventRecord>{});
    }

    ReportBundle bundle;
    bundle.dir = out_dir.empty() ? batch_dir / "report" : out_dir;
    std::error_code ec;
    fs::create_directories(bundle.dir, ec);
    if (ec) fail(Errc::IoFailure, bundle.dir.string() + ": " + ec.message());
    BundleWriter writer(bundle.dir);
    std::string body;

    for (const auto& tag : events::scalar_tags(logs)) {
        const auto stem = writer.write("series", tag, render_series({events::aggregate(logs, tag)}));
        body += figure(tag, stem);
    }

    std::set<std::string> confusion_tags, histogram_tags, grid_tags;
    for (const auto& log : logs)
        for (const auto& r : log) {
            if (r.kind() == events::EventKind::confusion) confusion_tags.insert(r.tag);
            if (r.kind() == events::EventKind::histogram) histogram_tags.insert(r.tag);
            if (r.kind() == events::EventKind::grid) grid_tags.insert(r.tag);
        }

    auto last_of = [](const std::vector<events::EventRecord>& log, const std::string& tag,
                      events::EventKind kind) -> const events::EventRecord* {
        for (auto it = log.rbegin(); it != log.rend(); ++it)
            if (it->tag == tag && it->kind() == kind) return &*it;
        return nullptr;
    };

    for (const auto& tag : confusion_tags) {
        std::vector<events::EventRecord> finals;
        for (const auto& log : logs)
            if (const auto* r = last_of(log, tag, events::EventKind::confusion)) finals.push_back(*r);
        const auto stem = writer.write("confusion", tag, render_confusion(events::accumulate_confusion(finals)));
        body += figure(tag + " (final, pooled over runs)", stem);
    }

    for (const auto& tag : histogram_tags) {
        std::vector<std::pair<std::string, events::Histogram>> ridges;
        for (std::size_t i = 0; i < logs.size(); ++i)
            if (const auto* r = last_of(logs[i], tag, events::EventKind::histogram))
                ridges.emplace_back(runs[i].filename().string() + " @" + std::to_string(r->step),
                                    std::get<events::Histogram>(r->payload));
        const auto stem = writer.write("histogram", tag, render_histograms(tag, ridges));
        body += figure(tag + " (latest per run)", stem);
    }

    for (const auto& tag : grid_tags) {
        for (std::size_t i = 0; i < logs.size(); ++i) {
            if (const auto* r = last_of(logs[i], tag, events::EventKind::grid)) {
                const auto stem = writer.write("grid", tag, render_grid(std::get<events::Grid>(r->payload)));
                body += figure(tag + " (" + runs[i].filename().string() + ", step " + std::to_string(r->step) + ")",
                               stem);
                break;
            }
        }
    }

    std::string html = "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>" +
                       escape(batch_dir.filename().string()) + "</title>\n</head>\n<body>\n<h1>" +
                       escape(batch_dir.filename().string()) + "</h1>\n" + body + "<section>\n<h2>runs</h2>\n<ul>\n";
    for (const auto& run : runs) {
        const auto rel = fs::relative(run / "manifest.json", bundle.dir, ec).generic_string();
        html += "<li><a href=\"" + escape(rel) + "\">" + escape(run.filename().string()) + "</a></li>\n";
    }
    html += "</ul>\n</section>\n</body>\n</html>\n";
    writer.write_raw("index.html", html);
    bundle.files = writer.files();
    return bundle;
}

}  // namespace repro::report
