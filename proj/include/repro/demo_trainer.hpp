#pragma once

#include "repro/dataprep.hpp"
#include "repro/events.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>

namespace repro::demo {

struct LogisticModel {
    std::array<double, 2> w{0.0, 0.0};
    double b = 0.0;
};

struct LossGrad {
    double loss = 0.0;
    std::array<double, 2> grad_w{0.0, 0.0};
    double grad_b = 0.0;
};

inline constexpr double kProbClamp = 1e-12;

double sigmoid(double t);
double predict(const LogisticModel& m, double x, double y);

// Mean cross-entropy and its gradient, summed in dataset order.
// Throws EmptyInput, BadLabel (labels must be 0 or 1).
LossGrad loss_and_grad(const LogisticModel& m, std::span<const dataprep::Point2D> data);

double accuracy(const LogisticModel& m, std::span<const dataprep::Point2D> data);

struct TrainConfig {
    double lr = 0.01;
    std::uint64_t epochs = 100;
    std::uint64_t grid_resolution = 32;
    std::uint64_t histogram_every = 10;
};

// Throws InvalidSpec when lr <= 0, epochs == 0 or grid_resolution == 0.
void validate(const TrainConfig& config);

using EventSink = std::function<void(const events::EventRecord&)>;

// Full-batch gradient descent from weights drawn uniformly in [-0.5, 0.5)
// (w0, w1, b order) out of make_stream(seed). Per epoch (step = epoch,
// 1-based): scalars "loss" and "accuracy" of the updated model; histogram
// "weights" every histogram_every epochs; after the last epoch a "confusion"
// matrix and a "decision" confidence grid over the data bounding box.
LogisticModel train(const TrainConfig& config, std::uint64_t seed,
                    std::span<const dataprep::Point2D> data, const EventSink& emit);

events::Grid decision_grid(const LogisticModel& m, std::span<const dataprep::Point2D> data,
                           std::uint64_t resolution);

// Two well-separated Gaussian blobs used when no dataset is given.
std::vector<dataprep::Point2D> default_dataset();

}  // namespace repro::demo
