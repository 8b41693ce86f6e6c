#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace repro::hpo {

// Dense row-major square matrix, just enough for the surrogate.
struct SquareMatrix {
    std::size_t n = 0;
    std::vector<double> data;

    explicit SquareMatrix(std::size_t size = 0) : n(size), data(size * size, 0.0) {}
    double& operator()(std::size_t i, std::size_t j) { return data[i * n + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * n + j]; }
};

// Lower-triangular factor L with A = L L^T, or nullopt if A is not positive definite.
std::optional<SquareMatrix> cholesky(const SquareMatrix& a);
// Solves L z = b.
std::vector<double> forward_substitute(const SquareMatrix& lower, std::span<const double> b);
// Solves L^T z = b.
std::vector<double> backward_substitute(const SquareMatrix& lower, std::span<const double> b);

using Points = std::vector<std::vector<double>>;

struct GpHyper {
    double lengthscale = 1.0;
    double signal_variance = 1.0;
    double noise_variance = 1e-6;
};

struct GpConfig {
    // Candidate lengthscales are these factors times sqrt(d).
    std::vector<double> lengthscale_factors{0.05, 0.1, 0.2, 0.5, 1.0, 2.0};
    std::vector<double> noise_variances{1e-6, 1e-4, 1e-2};
    double noise_floor = 1e-6;
};

double rbf_kernel(std::span<const double> a, std::span<const double> b, const GpHyper& h);

struct GpModel {
    Points inputs;
    std::vector<double> targets;  // standardized
    double target_mean = 0.0;
    double target_scale = 1.0;    // population std of the raw objectives
    bool constant = false;        // raw objectives had zero spread
    GpHyper hyper;
    double jitter = 0.0;
    SquareMatrix chol;            // of K + (noise + jitter) I
    std::vector<double> alpha;    // (K + noise I)^-1 y
    double log_marginal_likelihood = 0.0;
};

// Log marginal likelihood of standardized targets; nullopt when the
// factorization fails even after jitter escalation.
std::optional<double> log_marginal_likelihood(const Points& x, std::span<const double> y_std,
                                              const GpHyper& hyper);

// Exhaustive search over the configured hyperparameter grid (first maximum wins).
// Throws DegenerateData for n < 2, NumericalFailure when nothing factorizes.
GpModel fit_gp(const Points& x, std::span<const double> y, const GpConfig& config = {});

// Fit with fixed hyperparameters (still standardizes and escalates jitter).
GpModel fit_gp_fixed(const Points& x, std::span<const double> y, const GpHyper& hyper);

struct Posterior {
    double mu = 0.0;
    double sigma = 0.0;
};

// Latent-function posterior in raw objective units.
Posterior posterior(const GpModel& gp, std::span<const double> x);
// Same, in standardized units (sigma^2 bounded by the prior signal variance).
Posterior posterior_standardized(const GpModel& gp, std::span<const double> x);

double normal_pdf(double z);
double normal_cdf(double z);

enum class Goal { maximize, minimize };

double expected_improvement(double mu, double sigma, double best, double xi, Goal goal);

}  // namespace repro::hpo
