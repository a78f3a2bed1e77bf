#include <cmath>
#include <limits>
#include <vector>

#include <doctest.h>

#include "fedtrace/dp_accounting.hpp"
#include "fedtrace/errors.hpp"

using namespace fedtrace;

namespace {

// Quadrature oracle for the subsampled-Gaussian Renyi divergence: integrates
//   A = E_{z ~ N(0, sigma^2)} [ ((1-q) + q * exp((2z-1)/(2 sigma^2)))^alpha ]
// with Simpson's rule entirely in the log domain, then returns log(A)/(alpha-1).
// Shares no code with the library implementation.
double rdp_by_quadrature(double q, double sigma, double alpha) {
    const double lo = -50.0 * sigma;
    const double hi = alpha + 50.0 * sigma;
    const double h = 0.005;
    const size_t n = static_cast<size_t>(std::ceil((hi - lo) / h / 2.0)) * 2; // even
    const double step = (hi - lo) / static_cast<double>(n);

    const double log_pdf_norm = -std::log(sigma * std::sqrt(2.0 * M_PI));
    const double log_1mq = std::log1p(-q);
    const double log_q = std::log(q);

    std::vector<double> terms;
    terms.reserve(n + 1);
    for (size_t i = 0; i <= n; ++i) {
        const double z = lo + step * static_cast<double>(i);
        const double t = (2.0 * z - 1.0) / (2.0 * sigma * sigma);
        // log((1-q) + q e^t), stably from whichever side dominates
        const double a = log_1mq;
        const double b = log_q + t;
        const double log_mix = std::max(a, b) + std::log1p(std::exp(-std::abs(a - b)));
        const double log_f = -z * z / (2.0 * sigma * sigma) + log_pdf_norm + alpha * log_mix;
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        terms.push_back(log_f + std::log(w * step / 3.0));
    }
    double m = -std::numeric_limits<double>::infinity();
    for (double t : terms) m = std::max(m, t);
    double s = 0.0;
    for (double t : terms) s += std::exp(t - m);
    const double log_a = m + std::log(s);
    return log_a / (alpha - 1.0);
}

} // namespace

TEST_CASE("per-step rdp matches the quadrature oracle") {
    struct Probe {
        double q, sigma, alpha;
    };
    // mixes integer and fractional orders, small and large sampling rates
    const Probe probes[] = {
        {0.08, 1.1, 2.0},  {0.08, 1.1, 3.25}, {0.08, 1.1, 16.0}, {0.08, 1.1, 64.0},
        {0.3, 2.0, 7.75},  {0.01, 0.8, 1.5},  {0.5, 1.0, 4.0},   {0.064, 0.6, 2.5},
        {0.2, 1.5, 128.0},
    };
    for (const Probe& p : probes) {
        CAPTURE(p.q);
        CAPTURE(p.sigma);
        CAPTURE(p.alpha);
        const double got = subsampled_gaussian_rdp(p.q, p.sigma, p.alpha);
        const double want = rdp_by_quadrature(p.q, p.sigma, p.alpha);
        CHECK(got == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("full batch (q=1) reduces to the plain Gaussian mechanism") {
    for (double sigma : {0.5, 1.0, 2.0})
        for (double alpha : {2.0, 10.5, 64.0})
            CHECK(subsampled_gaussian_rdp(1.0, sigma, alpha) ==
                  doctest::Approx(alpha / (2.0 * sigma * sigma)).epsilon(1e-12));
}

TEST_CASE("epsilon conversion matches an oracle built on the same order grid") {
    const double q = 0.08, sigma = 1.1, delta = 1e-5;
    const long long steps = 325;
    double best = std::numeric_limits<double>::infinity();
    for (double alpha : rdp_alpha_grid()) {
        const double eps =
            static_cast<double>(steps) * rdp_by_quadrature(q, sigma, alpha) +
            std::log(1.0 / delta) / (alpha - 1.0);
        best = std::min(best, eps);
    }
    DpConfig dp;
    dp.noise_multiplier = sigma;
    dp.delta = delta;
    CHECK(rdp_epsilon(dp, q, steps) == doctest::Approx(best).epsilon(1e-5));
}

TEST_CASE("epsilon falls as noise rises and grows with steps") {
    DpConfig dp;
    const double q = 0.08;
    const long long steps = 325;
    double prev = std::numeric_limits<double>::infinity();
    for (double sigma : {0.6, 0.8, 1.0, 1.5, 2.0, 5.0}) {
        dp.noise_multiplier = sigma;
        const double eps = rdp_epsilon(dp, q, steps);
        CHECK(eps < prev);
        CHECK(eps > 0.0);
        prev = eps;
    }

    dp.noise_multiplier = 1.0;
    double low = rdp_epsilon(dp, q, 100);
    double mid = rdp_epsilon(dp, q, 325);
    double high = rdp_epsilon(dp, q, 1000);
    CHECK(low < mid);
    CHECK(mid < high);
}

TEST_CASE("degenerate noise levels") {
    DpConfig dp;
    dp.noise_multiplier = 0.0;
    CHECK(std::isinf(rdp_epsilon(dp, 0.1, 10)));

    dp.noise_multiplier = 100.0;
    CHECK(rdp_epsilon(dp, 0.05, 10) < 0.1);
}

TEST_CASE("input validation") {
    DpConfig dp;
    CHECK_THROWS_AS((void)rdp_epsilon(dp, 0.0, 10), ConfigError);
    CHECK_THROWS_AS((void)rdp_epsilon(dp, 1.2, 10), ConfigError);
    CHECK_THROWS_AS((void)rdp_epsilon(dp, 0.5, 0), ConfigError);
    CHECK_THROWS_AS((void)subsampled_gaussian_rdp(0.5, 1.0, 1.0), ConfigError);
    CHECK_THROWS_AS((void)subsampled_gaussian_rdp(0.5, -1.0, 2.0), ConfigError);
    CHECK_THROWS_AS((void)subsampled_gaussian_rdp(0.5, 0.0, 2.0), ConfigError);
}

TEST_CASE("order grid is usable") {
    const std::vector<double>& grid = rdp_alpha_grid();
    REQUIRE(!grid.empty());
    CHECK(grid.front() == doctest::Approx(1.25));
    CHECK(grid.back() == doctest::Approx(1024.0));
    for (size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] > grid[i - 1]);
    bool has64 = false;
    for (double a : grid)
        if (a == 64.0) has64 = true;
    CHECK(has64);
}
