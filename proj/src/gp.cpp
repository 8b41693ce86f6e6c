#include "repro/gp.hpp"

#include "repro/error.hpp"

#include <cmath>
#include <numbers>

namespace repro::hpo {

std::optional<SquareMatrix> cholesky(const SquareMatrix& a) {
    const std::size_t n = a.n;
    SquareMatrix l(n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    return l;
}

std::vector<double> forward_substitute(const SquareMatrix& lower, std::span<const double> b) {
    const std::size_t n = lower.n;
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= lower(i, k) * z[k];
        z[i] = s / lower(i, i);
    }
    return z;
}

std::vector<double> backward_substitute(const SquareMatrix& lower, std::span<const double> b) {
    const std::size_t n = lower.n;
    std::vector<double> z(n);
    for (std::size_t ii = n; ii-- > 0;) {
        double s = b[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= lower(k, ii) * z[k];
        z[ii] = s / lower(ii, ii);
    }
    return z;
}

double rbf_kernel(std::span<const double> a, std::span<const double> b, const GpHyper& h) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        d2 += d * d;
    }
    return h.signal_variance * std::exp(-d2 / (2.0 * h.lengthscale * h.lengthscale));
}

namespace {

struct Factorization {
    SquareMatrix chol;
    double jitter = 0.0;
};

SquareMatrix gram(const Points& x, const GpHyper& h) {
    const std::size_t n = x.size();
    SquareMatrix k(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const double v = rbf_kernel(x[i], x[j], h);
            k(i, j) = v;
            k(j, i) = v;
        }
        k(i, i) += h.noise_variance;
    }
    return k;
}

// Jitter schedule: none, then 1e-10, 1e-9, ... up to 1e-4.
std::optional<Factorization> factorize(const Points& x, const GpHyper& h) {
    const SquareMatrix k = gram(x, h);
    if (auto l = cholesky(k)) return Factorization{std::move(*l), 0.0};
    for (double jitter = 1e-10; jitter <= 1e-4 * 1.0000001; jitter *= 10.0) {
        SquareMatrix kj = k;
        for (std::size_t i = 0; i < kj.n; ++i) kj(i, i) += jitter;
        if (auto l = cholesky(kj)) return Factorization{std::move(*l), jitter};
    }
    return std::nullopt;
}

double lml_from(const SquareMatrix& l, std::span<const double> y, const std::vector<double>& alpha) {
    const std::size_t n = y.size();
    double quad = 0.0;
    for (std::size_t i = 0; i < n; ++i) quad += y[i] * alpha[i];
    double half_logdet = 0.0;
    for (std::size_t i = 0; i < n; ++i) half_logdet += std::log(l(i, i));
    return -0.5 * quad - half_logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

std::vector<double> solve(const SquareMatrix& l, std::span<const double> y) {
    auto z = forward_substitute(l, y);
    return backward_substitute(l, z);
}

GpModel standardized_base(const Points& x, std::span<const double> y) {
    if (x.size() < 2 || x.size() != y.size()) fail(Errc::DegenerateData, "need at least 2 observations");
    for (double v : y)
        if (!std::isfinite(v)) fail(Errc::DegenerateData, "non-finite objective");
    GpModel gp;
    gp.inputs = x;
    const double n = static_cast<double>(y.size());
    double sum = 0.0;
    for (double v : y) sum += v;
    gp.target_mean = sum / n;
    double ss = 0.0;
    for (double v : y) ss += (v - gp.target_mean) * (v - gp.target_mean);
    const double scale = std::sqrt(ss / n);
    gp.targets.resize(y.size());
    if (!(scale > 0.0)) {
        gp.constant = true;
        gp.target_scale = 0.0;
        return gp;
    }
    gp.target_scale = scale;
    for (std::size_t i = 0; i < y.size(); ++i) gp.targets[i] = (y[i] - gp.target_mean) / scale;
    return gp;
}

void attach(GpModel& gp, const GpHyper& hyper, Factorization f) {
    gp.hyper = hyper;
    gp.jitter = f.jitter;
    gp.alpha = solve(f.chol, gp.targets);
    gp.log_marginal_likelihood = lml_from(f.chol, gp.targets, gp.alpha);
    gp.chol = std::move(f.chol);
}

}  // namespace

std::optional<double> log_marginal_likelihood(const Points& x, std::span<const double> y_std,
                                              const GpHyper& hyper) {
    auto f = factorize(x, hyper);
    if (!f) return std::nullopt;
    const auto alpha = solve(f->chol, y_std);
    return lml_from(f->chol, y_std, alpha);
}

GpModel fit_gp(const Points& x, std::span<const double> y, const GpConfig& config) {
    GpModel gp = standardized_base(x, y);
    const std::size_t d = x.front().size();
    const double root_d = std::sqrt(static_cast<double>(d == 0 ? 1 : d));
    if (gp.constant) {
        gp.hyper = GpHyper{config.lengthscale_factors.front() * root_d, 1.0, config.noise_floor};
        return gp;
    }

    std::optional<std::pair<GpHyper, Factorization>> best;
    double best_lml = 0.0;
    for (double factor : config.lengthscale_factors) {
        for (double noise : config.noise_variances) {
            if (noise < config.noise_floor) continue;
            const GpHyper h{factor * root_d, 1.0, noise};
            auto f = factorize(x, h);
            if (!f) continue;
            const auto alpha = solve(f->chol, gp.targets);
            const double lml = lml_from(f->chol, gp.targets, alpha);
            if (!std::isfinite(lml)) continue;
            if (!best || lml > best_lml) {
                best_lml = lml;
                best.emplace(h, std::move(*f));
            }
        }
    }
    if (!best) fail(Errc::NumericalFailure, "no hyperparameter setting factorized");
    attach(gp, best->first, std::move(best->second));
    return gp;
}

GpModel fit_gp_fixed(const Points& x, std::span<const double> y, const GpHyper& hyper) {
    GpModel gp = standardized_base(x, y);
    gp.hyper = hyper;
    if (gp.constant) return gp;
    auto f = factorize(x, hyper);
    if (!f) fail(Errc::NumericalFailure, "jitter exhausted");
    attach(gp, hyper, std::move(*f));
    return gp;
}

Posterior posterior_standardized(const GpModel& gp, std::span<const double> x) {
    if (gp.constant) return {0.0, 0.0};
    const std::size_t n = gp.inputs.size();
    std::vector<double> k_star(n);
    for (std::size_t i = 0; i < n; ++i) k_star[i] = rbf_kernel(gp.inputs[i], x, gp.hyper);
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += k_star[i] * gp.alpha[i];
    const auto v = forward_substitute(gp.chol, k_star);
    double reduction = 0.0;
    for (double vi : v) reduction += vi * vi;
    const double var = std::max(0.0, gp.hyper.signal_variance - reduction);
    return {mu, std::sqrt(var)};
}

Posterior posterior(const GpModel& gp, std::span<const double> x) {
    if (gp.constant) return {gp.target_mean, 0.0};
    const Posterior p = posterior_standardized(gp, x);
    return {gp.target_mean + gp.target_scale * p.mu, gp.target_scale * p.sigma};
}

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

// erfc from the C library (a rational approximation with error far below 1e-7).
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double expected_improvement(double mu, double sigma, double best, double xi, Goal goal) {
    if (!(sigma > 0.0)) return 0.0;
    const double gain = goal == Goal::maximize ? mu - best - xi : best - mu - xi;
    const double z = gain / sigma;
    const double ei = gain * normal_cdf(z) + sigma * normal_pdf(z);
    return ei > 0.0 ? ei : 0.0;
}

}  // namespace repro::hpo
