#include "repro/error.hpp"
#include "repro/gp.hpp"
#include "repro/seedctl.hpp"

#include "support.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

using namespace repro;
using namespace repro::hpo;

namespace {

struct Instance {
    Points x;
    std::vector<double> y;
};

// Noise-free targets let nearly coincident inputs be interpolated at tiny noise.
Instance random_instance(seedctl::Stream& s, bool noisy = true) {
    const auto d = 1 + s.next_below(3);
    const auto n = 2 + s.next_below(19);
    Instance inst;
    for (std::uint64_t i = 0; i < n; ++i) {
        std::vector<double> p(d);
        for (auto& v : p) v = s.next_unit_float();
        inst.x.push_back(p);
        double t = 0;
        for (auto v : p) t += std::sin(6 * v);
        const double e = s.next_gaussian();
        inst.y.push_back(10 * t + (noisy ? e : 0.0));
    }
    return inst;
}

// Dense-algebra reference for the log marginal likelihood of standardized targets.
std::optional<double> eigen_lml(const Points& x, const Eigen::VectorXd& y, double ell, double noise) {
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            double d2 = 0;
            for (std::size_t c = 0; c < x[i].size(); ++c) d2 += (x[i][c] - x[j][c]) * (x[i][c] - x[j][c]);
            k(i, j) = std::exp(-d2 / (2 * ell * ell)) + (i == j ? noise : 0.0);
        }
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) return std::nullopt;
    const Eigen::VectorXd alpha = llt.solve(y);
    const double logdet = 2 * llt.matrixLLT().diagonal().array().log().sum();
    return -0.5 * y.dot(alpha) - 0.5 * logdet - 0.5 * n * std::log(2 * std::numbers::pi);
}

Eigen::VectorXd standardize(const std::vector<double>& y) {
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    const double mean = v.mean();
    const double sd = std::sqrt((v.array() - mean).square().mean());
    return (v.array() - mean) / sd;
}

}  // namespace

TEST_CASE("cholesky solves match eigen") {
    auto s = seedctl::make_stream(8);
    for (int t = 0; t < 20; ++t) {
        const std::size_t n = 1 + s.next_below(8);
        Eigen::MatrixXd b(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) b(i, j) = s.next_gaussian();
        const Eigen::MatrixXd a = b * b.transpose() + Eigen::MatrixXd::Identity(n, n);
        SquareMatrix m(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) m(i, j) = a(i, j);
        const auto l = cholesky(m);
        REQUIRE(l.has_value());
        std::vector<double> rhs(n);
        for (auto& v : rhs) v = s.next_gaussian();
        const auto z = backward_substitute(*l, forward_substitute(*l, rhs));
        const Eigen::VectorXd want = a.llt().solve(Eigen::Map<Eigen::VectorXd>(rhs.data(), n));
        for (std::size_t i = 0; i < n; ++i) REQUIRE(std::abs(z[i] - want(i)) < 1e-9 * (1 + std::abs(want(i))));
    }
    SquareMatrix neg(2);
    neg(0, 0) = 1;
    neg(1, 1) = -1;
    CHECK(!cholesky(neg).has_value());
}

TEST_CASE("posterior interpolates training points at tiny noise") {
    auto s = seedctl::make_stream(101);
    for (int t = 0; t < 20; ++t) {
        const auto inst = random_instance(s, false);
        const double d = static_cast<double>(inst.x.front().size());
        const auto gp = fit_gp_fixed(inst.x, inst.y, {0.05 * std::sqrt(d), 1.0, 1e-6});
        for (std::size_t i = 0; i < inst.x.size(); ++i) {
            const auto p = posterior(gp, inst.x[i]);
            REQUIRE(std::abs(p.mu - inst.y[i]) <= 1e-3);
        }
    }
}

TEST_CASE("posterior variance never exceeds the prior") {
    auto s = seedctl::make_stream(102);
    for (int t = 0; t < 20; ++t) {
        const auto inst = random_instance(s);
        const auto gp = fit_gp(inst.x, inst.y);
        for (int q = 0; q < 50; ++q) {
            std::vector<double> x(inst.x.front().size());
            for (auto& v : x) v = s.next_unit_float();
            const auto p = posterior_standardized(gp, x);
            REQUIRE(p.sigma * p.sigma <= gp.hyper.signal_variance + 1e-9);
            REQUIRE(p.sigma >= 0.0);
        }
    }
}

TEST_CASE("hyperparameter selection matches a dense brute force") {
    auto s = seedctl::make_stream(103);
    const GpConfig config;
    for (int t = 0; t < 20; ++t) {
        const auto inst = random_instance(s);
        const auto y = standardize(inst.y);
        const double root_d = std::sqrt(static_cast<double>(inst.x.front().size()));
        std::optional<double> best;
        double best_ell = 0, best_noise = 0;
        for (double f : config.lengthscale_factors)
            for (double noise : config.noise_variances) {
                const auto lml = eigen_lml(inst.x, y, f * root_d, noise);
                if (lml && (!best || *lml > *best)) {
                    best = lml;
                    best_ell = f * root_d;
                    best_noise = noise;
                }
            }
        REQUIRE(best.has_value());
        const auto gp = fit_gp(inst.x, inst.y, config);
        CHECK(gp.hyper.lengthscale == best_ell);
        CHECK(gp.hyper.noise_variance == best_noise);
        CHECK(std::abs(gp.log_marginal_likelihood - *best) < 1e-6 * std::max(1.0, std::abs(*best)));
    }
}

TEST_CASE("degenerate data") {
    CHECK(testing::error_code_of([] { fit_gp({{0.5}}, std::vector<double>{1.0}); }) == Errc::DegenerateData);
    const auto flat = fit_gp({{0.1}, {0.9}}, std::vector<double>{2.0, 2.0});
    CHECK(flat.constant);
    const std::vector<double> q{0.5};
    CHECK(posterior(flat, q).mu == 2.0);
    CHECK(posterior(flat, q).sigma == 0.0);
}

TEST_CASE("duplicate inputs still factorize") {
    const Points x{{0.5}, {0.5}, {0.2}};
    const auto gp = fit_gp_fixed(x, std::vector<double>{1.0, 1.0, 0.0}, {0.3, 1.0, 0.0});
    CHECK(gp.jitter > 0.0);
}

TEST_CASE("normal helpers") {
    CHECK(std::abs(normal_pdf(0) - 0.3989422804014327) < 1e-15);
    CHECK(normal_cdf(0) == 0.5);
    CHECK(std::abs(normal_cdf(1.959963984540054) - 0.975) < 1e-12);
}

TEST_CASE("expected improvement properties") {
    CHECK(std::abs(expected_improvement(0, 1, 0, 0, Goal::maximize) - 0.3989422804014327) < 1e-9);
    CHECK(expected_improvement(5, 0, 0, 0, Goal::maximize) == 0.0);
    CHECK(expected_improvement(5, 0, 0, 0, Goal::minimize) == 0.0);
    // Minimizing mirrors maximizing.
    CHECK(expected_improvement(1, 0.5, 2, 0, Goal::minimize) == expected_improvement(2, 0.5, 1, 0, Goal::maximize));
    auto s = seedctl::make_stream(104);
    for (int i = 0; i < 100000; ++i) {
        const double mu = (s.next_unit_float() - 0.5) * 200;
        const double sigma = s.next_unit_float() * 10;
        const double best = (s.next_unit_float() - 0.5) * 200;
        REQUIRE(expected_improvement(mu, sigma, best, 0.01, Goal::maximize) >= 0.0);
        REQUIRE(expected_improvement(mu, sigma, best, 0.01, Goal::minimize) >= 0.0);
    }
    // EI grows with mu for fixed sigma.
    CHECK(expected_improvement(1, 1, 0, 0, Goal::maximize) > expected_improvement(0, 1, 0, 0, Goal::maximize));
}
