#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cbs/dr.hpp"
#include "cbs/rng.hpp"
#include "helpers.hpp"

using namespace cbs;

namespace {
// direct transliteration of the displayed estimator, kept independent of
// the library path
double aipw_direct(const std::vector<double>& y, const std::vector<std::uint8_t>& d,
                   const std::vector<double>& e, const std::vector<double>& b1,
                   const std::vector<double>& b0) {
    const double n = static_cast<double>(y.size());
    double first = 0.0, second = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        first += (d[i] * y[i] - (d[i] - e[i]) * b1[i]) / e[i] / n;
        second += ((1 - d[i]) * y[i] + (d[i] - e[i]) * b0[i]) / (1.0 - e[i]) / n;
    }
    return first - second;
}
}  // namespace

TEST_CASE("aipw: constant cancellation and IPW reduction") {
    const std::size_t n = 9;
    std::vector<double> y(n, 7.0), b(n, 7.0);
    std::vector<std::uint8_t> d = {1, 0, 1, 1, 0, 0, 1, 0, 1};
    std::vector<double> e = {0.3, 0.5, 0.7, 0.2, 0.9, 0.45, 0.55, 0.61, 0.39};
    CHECK(std::fabs(aipw(y, d, e, b, b)) <= 1e-12);

    Rng rng(21);
    auto y2 = testutil::normal_vec(rng, n);
    std::vector<double> zeros(n, 0.0), half(n, 0.5);
    double ipw = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        ipw += (2.0 * d[i] * y2[i] - 2.0 * (1 - d[i]) * y2[i]) / static_cast<double>(n);
    CHECK(aipw(y2, d, half, zeros, zeros) == Catch::Approx(ipw).margin(1e-13));
}

TEST_CASE("aipw: pinned n=6 instance and direct-formula cross-check") {
    std::vector<double> y = {1.0, 2.0, 0.5, -1.0, 3.0, 0.0};
    std::vector<std::uint8_t> d = {1, 0, 1, 0, 1, 0};
    std::vector<double> e = {0.5, 0.25, 0.8, 0.4, 0.3, 0.6};
    std::vector<double> b1 = {0.9, 1.5, 0.2, -0.5, 2.0, 0.3};
    std::vector<double> b0 = {0.1, 1.0, -0.3, -1.2, 1.1, 0.2};
    const double dh = aipw(y, d, e, b1, b0);
    CHECK(dh == Catch::Approx(1.0402777777777776).margin(1e-14));
    CHECK(dh == Catch::Approx(aipw_direct(y, d, e, b1, b0)).margin(1e-13));

    auto [phi, v] = influence_and_variance(y, d, e, b1, b0, dh);
    CHECK(v == Catch::Approx(2.3970929783950625).margin(1e-13));
    const std::vector<double> phi_pinned = {
        -0.040277777777777635, -1.8736111111111109, -0.16527777777777763,
        -0.67361111111111094,  3.1930555555555564,  -0.44027777777777755};
    for (std::size_t i = 0; i < 6; ++i)
        CHECK(phi[i] == Catch::Approx(phi_pinned[i]).margin(1e-12));
}

TEST_CASE("aipw input validation") {
    std::vector<double> y = {1.0, 2.0};
    std::vector<std::uint8_t> d = {1, 0};
    std::vector<double> ok = {0.4, 0.6}, bad = {0.0, 0.5}, b = {0.0, 0.0};
    CHECK_THROWS_AS(aipw(y, d, bad, b, b), invalid_input);
    std::vector<double> shorty = {1.0};
    CHECK_THROWS_AS(aipw(shorty, d, ok, b, b), invalid_input);
}

TEST_CASE("influence values center at the reported estimate") {
    Rng rng(31);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n = 20 + rng.below(60);
        auto y = testutil::normal_vec(rng, n);
        std::vector<std::uint8_t> d(n);
        for (auto& b : d) b = rng.bernoulli(0.5) ? 1 : 0;
        std::vector<double> e(n), b1(n), b0(n);
        for (std::size_t i = 0; i < n; ++i) {
            e[i] = rng.uniform(0.05, 0.95);
            b1[i] = rng.normal();
            b0[i] = rng.normal();
        }
        const double dh = aipw(y, d, e, b1, b0);
        auto [phi, v] = influence_and_variance(y, d, e, b1, b0, dh);
        double mean_phi = 0.0, ss = 0.0;
        for (double p : phi) mean_phi += p;
        mean_phi /= static_cast<double>(n);
        CHECK(std::fabs(mean_phi) <= 1e-10);
        for (double p : phi) ss += p * p;
        CHECK(v == Catch::Approx(ss / static_cast<double>(n)).margin(1e-12));
        CHECK(v >= 0.0);
    }
}

TEST_CASE("zero-noise constant-effect collapse") {
    // Y generated exactly as b_d(X) with b1 - b0 constant = delta
    const std::size_t n = 12;
    Rng rng(55);
    std::vector<double> b0(n), b1(n), y(n), e(n);
    std::vector<std::uint8_t> d(n);
    const double delta = 3.0;
    for (std::size_t i = 0; i < n; ++i) {
        b0[i] = rng.normal();
        b1[i] = b0[i] + delta;
        d[i] = rng.bernoulli(0.5) ? 1 : 0;
        y[i] = d[i] ? b1[i] : b0[i];
        e[i] = rng.uniform(0.2, 0.8);
    }
    const double dh = aipw(y, d, e, b1, b0);
    CHECK(dh == Catch::Approx(delta).margin(1e-12));
    auto [phi, v] = influence_and_variance(y, d, e, b1, b0, dh);
    for (double p : phi) CHECK(std::fabs(p) <= 1e-12);
    CHECK(v <= 1e-24);
}

TEST_CASE("translation equivariance identities") {
    Rng rng(60);
    const std::size_t n = 40;
    auto y = testutil::normal_vec(rng, n);
    std::vector<std::uint8_t> d(n);
    for (auto& b : d) b = rng.bernoulli(0.4) ? 1 : 0;
    std::vector<double> e(n), b1(n), b0(n);
    for (std::size_t i = 0; i < n; ++i) {
        e[i] = rng.uniform(0.1, 0.9);
        b1[i] = rng.normal();
        b0[i] = rng.normal();
    }
    const double base = aipw(y, d, e, b1, b0);
    auto [phi0, v0] = influence_and_variance(y, d, e, b1, b0, base);

    const double c = 4.25;
    std::vector<double> yc(n), b1c(n), b0c(n);
    for (std::size_t i = 0; i < n; ++i) {
        yc[i] = y[i] + c;
        b1c[i] = b1[i] + c;
        b0c[i] = b0[i] + c;
    }
    const double shifted = aipw(yc, d, e, b1c, b0c);
    CHECK(shifted == Catch::Approx(base).margin(1e-12));
    auto [phi1, v1] = influence_and_variance(yc, d, e, b1c, b0c, shifted);
    CHECK(v1 == Catch::Approx(v0).margin(1e-10));

    // shifting Y alone moves the estimate by the stated weighted-mean gap
    const double only_y = aipw(yc, d, e, b1, b0);
    double w1 = 0.0, w0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        w1 += d[i] / e[i] / static_cast<double>(n);
        w0 += (1 - d[i]) / (1.0 - e[i]) / static_cast<double>(n);
    }
    CHECK(only_y - base == Catch::Approx(c * (w1 - w0)).margin(1e-12));
}

TEST_CASE("normal quantile against bisection oracle") {
    CHECK(std::fabs(normal_quantile(0.975) - 1.959964) <= 1e-5);
    for (double p : {0.001, 0.01, 0.025, 0.1, 0.3, 0.5, 0.7, 0.9, 0.975, 0.99, 0.999}) {
        CHECK(std::fabs(normal_quantile(p) - testutil::normal_quantile_bisect(p)) <= 1e-9);
    }
    CHECK_THROWS_AS(normal_quantile(0.0), invalid_input);
    CHECK_THROWS_AS(normal_quantile(1.0), invalid_input);
}

TEST_CASE("wald interval forms") {
    auto [l0, u0] = wald_ci(1.5, 0.0, 100, 0.05);
    CHECK(l0 == 1.5);
    CHECK(u0 == 1.5);

    auto [l, u] = wald_ci(2.0, 4.0, 400, 0.05);
    CHECK(l == Catch::Approx(2.0 - 1.959964 * 0.1).margin(1e-6));
    CHECK(u == Catch::Approx(2.0 + 1.959964 * 0.1).margin(1e-6));

    CHECK_THROWS_AS(wald_ci(0.0, 1.0, 10, 0.0), invalid_input);
    CHECK_THROWS_AS(wald_ci(0.0, 1.0, 10, 1.0), invalid_input);
    CHECK_THROWS_AS(wald_ci(0.0, -1.0, 10, 0.5), invalid_input);
}
