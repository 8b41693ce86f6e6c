#include "repro/demo_trainer.hpp"

#include "repro/error.hpp"
#include "repro/seedctl.hpp"
#include "repro/util.hpp"

#include <algorithm>
#include <cmath>

namespace repro::demo {

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

double predict(const LogisticModel& m, double x, double y) {
    return sigmoid(m.w[0] * x + m.w[1] * y + m.b);
}

namespace {

// -ln(sigmoid(-t)) without cancellation.
double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

// Per-sample loss bounds implied by clamping p to [kProbClamp, 1 - kProbClamp].
const double kMinTerm = -std::log1p(-kProbClamp);
const double kMaxTerm = -std::log(kProbClamp);

}  // namespace

LossGrad loss_and_grad(const LogisticModel& m, std::span<const dataprep::Point2D> data) {
    if (data.empty()) fail(Errc::EmptyInput, "dataset is empty");
    LossGrad out;
    for (const auto& pt : data) {
        if (pt.label != 0 && pt.label != 1) fail(Errc::BadLabel, std::to_string(pt.label));
        const double t = m.w[0] * pt.x + m.w[1] * pt.y + m.b;
        const double p = sigmoid(t);
        out.loss += std::clamp(softplus(pt.label == 1 ? -t : t), kMinTerm, kMaxTerm);
        const double r = p - static_cast<double>(pt.label);
        out.grad_w[0] += r * pt.x;
        out.grad_w[1] += r * pt.y;
        out.grad_b += r;
    }
    const double n = static_cast<double>(data.size());
    out.loss /= n;
    out.grad_w[0] /= n;
    out.grad_w[1] /= n;
    out.grad_b /= n;
    return out;
}

double accuracy(const LogisticModel& m, std::span<const dataprep::Point2D> data) {
    if (data.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& pt : data) {
        const int guess = predict(m, pt.x, pt.y) >= 0.5 ? 1 : 0;
        if (guess == pt.label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

void validate(const TrainConfig& config) {
    if (!(config.lr > 0.0) || !std::isfinite(config.lr)) fail(Errc::InvalidSpec, "lr must be > 0");
    if (config.epochs == 0) fail(Errc::InvalidSpec, "epochs must be >= 1");
    if (config.grid_resolution == 0) fail(Errc::InvalidSpec, "grid resolution must be >= 1");
}

namespace {

struct Bounds {
    double x_min, x_max, y_min, y_max;
};

Bounds bounding_box(std::span<const dataprep::Point2D> data) {
    Bounds b{data[0].x, data[0].x, data[0].y, data[0].y};
    for (const auto& p : data) {
        b.x_min = std::min(b.x_min, p.x);
        b.x_max = std::max(b.x_max, p.x);
        b.y_min = std::min(b.y_min, p.y);
        b.y_max = std::max(b.y_max, p.y);
    }
    if (!(b.x_min < b.x_max)) {
        b.x_min -= 0.5;
        b.x_max += 0.5;
    }
    if (!(b.y_min < b.y_max)) {
        b.y_min -= 0.5;
        b.y_max += 0.5;
    }
    return b;
}

events::Histogram weight_histogram(const LogisticModel& m) {
    constexpr std::size_t bins = 5;
    const std::array<double, 3> values{m.w[0], m.w[1], m.b};
    double lo = *std::min_element(values.begin(), values.end());
    double hi = *std::max_element(values.begin(), values.end());
    if (!(lo < hi)) {
        lo -= 0.5;
        hi += 0.5;
    }
    events::Histogram h;
    h.edges.resize(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i)
        h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
    h.edges[bins] = hi;
    h.counts.assign(bins, 0);
    for (double v : values) {
        auto idx = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
        h.counts[std::min(idx, bins - 1)] += 1;
    }
    return h;
}

events::Confusion confusion(const LogisticModel& m, std::span<const dataprep::Point2D> data) {
    events::Confusion c;
    c.labels = {"0", "1"};
    c.counts.assign(2, std::vector<std::uint64_t>(2, 0));
    for (const auto& pt : data) {
        const int guess = predict(m, pt.x, pt.y) >= 0.5 ? 1 : 0;
        c.counts[static_cast<std::size_t>(pt.label)][static_cast<std::size_t>(guess)] += 1;
    }
    return c;
}

}  // namespace

events::Grid decision_grid(const LogisticModel& m, std::span<const dataprep::Point2D> data,
                           std::uint64_t resolution) {
    const Bounds b = bounding_box(data);
    events::Grid g;
    g.x_min = b.x_min;
    g.x_max = b.x_max;
    g.y_min = b.y_min;
    g.y_max = b.y_max;
    g.rows = resolution;
    g.cols = resolution;
    g.values.reserve(resolution * resolution);
    const double res = static_cast<double>(resolution);
    // Row 0 is the lowest y band; cells are sampled at their centers.
    for (std::uint64_t r = 0; r < resolution; ++r) {
        const double y = b.y_min + (static_cast<double>(r) + 0.5) * (b.y_max - b.y_min) / res;
        for (std::uint64_t c = 0; c < resolution; ++c) {
            const double x = b.x_min + (static_cast<double>(c) + 0.5) * (b.x_max - b.x_min) / res;
            g.values.push_back(predict(m, x, y));
        }
    }
    return g;
}

LogisticModel train(const TrainConfig& config, std::uint64_t seed,
                    std::span<const dataprep::Point2D> data, const EventSink& emit) {
    validate(config);
    auto stream = seedctl::make_stream(seed);
    LogisticModel m;
    m.w[0] = stream.next_unit_float() - 0.5;
    m.w[1] = stream.next_unit_float() - 0.5;
    m.b = stream.next_unit_float() - 0.5;

    LossGrad lg = loss_and_grad(m, data);
    for (std::uint64_t epoch = 1; epoch <= config.epochs; ++epoch) {
        m.w[0] -= config.lr * lg.grad_w[0];
        m.w[1] -= config.lr * lg.grad_w[1];
        m.b -= config.lr * lg.grad_b;
        lg = loss_and_grad(m, data);
        emit(events::scalar(epoch, "loss", lg.loss));
        emit(events::scalar(epoch, "accuracy", accuracy(m, data)));
        if (config.histogram_every > 0 && epoch % config.histogram_every == 0)
            emit(events::EventRecord{epoch, 0, "weights", weight_histogram(m)});
    }
    emit(events::EventRecord{config.epochs, 0, "confusion", confusion(m, data)});
    emit(events::EventRecord{config.epochs, 0, "decision", decision_grid(m, data, config.grid_resolution)});
    return m;
}

std::vector<dataprep::Point2D> default_dataset() {
    dataprep::Toy2DSpec spec;
    spec.family = dataprep::BlobsFamily{{{-1.0, -1.0}, {1.0, 1.0}}, 0.4};
    spec.n_points = 200;
    spec.seed = 7;
    return dataprep::generate_2d(spec);
}

}  // namespace repro::demo
