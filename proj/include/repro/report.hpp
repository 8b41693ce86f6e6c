#pragma once

#include "repro/dataprep.hpp"
#include "repro/events.hpp"
#include "repro/util.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace repro::report {

// An SVG plus the CSV holding exactly the plotted numbers.
struct Artifact {
    std::string svg;
    std::string csv;
};

enum class Band { std1, none };

// Mean line per series, optionally with a translucent mean +/- std band.
// With one series the CSV is aggregate_csv(series) verbatim; with several a
// leading tag column is added. Throws EmptySeries.
Artifact render_series(const std::vector<events::AggregateSeries>& series, Band band = Band::std1);

// Row = true class. Cells shaded from white to dark by count / max count.
// CSV: header ",<label>..." then one "<label>,<count>..." row per true class.
Artifact render_confusion(const events::ConfusionMatrix& cm);

// Blue-white-red heatmap with 0.5 as white; row 0 at the bottom.
// CSV: row,col,x,y,value with (x, y) the cell center.
Artifact render_grid(const events::Grid& grid, std::span<const dataprep::Point2D> overlay = {});

// One ridge per (label, histogram), stacked top to bottom.
// CSV: ridge,bin_lo,bin_hi,count.
Artifact render_histograms(const std::string& tag,
                           const std::vector<std::pair<std::string, events::Histogram>>& ridges);

// RGB for a grid value in [0, 1]; exposed for tests.
struct Rgb {
    int r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};
Rgb diverging_color(double v);
Rgb sequential_color(double t);

struct ReportBundle {
    fs::path dir;
    std::vector<fs::path> files;  // relative to dir, in write order
};

// Reads every run-<i> of the batch and writes <batch_dir>/report (or
// out_dir): series per scalar tag, pooled final confusion per tag, latest
// histogram per tag and run, latest grid per tag from the first run, and an
// index.html linking all of it plus each run's manifest. Throws NoRunsFound.
ReportBundle build_report(const fs::path& batch_dir, const fs::path& out_dir = {});

// Replaces anything outside [A-Za-z0-9._-] with '_'.
std::string file_stem(const std::string& tag);

}  // namespace repro::report
