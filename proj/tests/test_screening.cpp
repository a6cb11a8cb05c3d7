#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <vector>

#include "cbs/screening.hpp"
#include "cbs/rng.hpp"
#include "helpers.hpp"

using namespace cbs;

namespace {

FeatureMatrix named(Matrix m) {
    std::vector<std::string> names(m.cols());
    for (std::size_t j = 0; j < m.cols(); ++j) names[j] = "X" + std::to_string(j + 1);
    return FeatureMatrix(std::move(m), std::move(names));
}

}  // namespace

TEST_CASE("a copy of the outcome beats constant columns") {
    Rng rng(1);
    const std::size_t n = 24;
    auto yv = testutil::normal_vec(rng, n);
    Matrix x(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
        x.at(i, 0) = yv[i];  // identical to the outcome
        x.at(i, 1) = 3.0;
        x.at(i, 2) = -1.0;
    }
    std::vector<std::uint8_t> dv(n);
    for (std::size_t i = 0; i < n; ++i) dv[i] = i % 2;
    ScreenResult sr = screen(named(std::move(x)), Sample(yv), ArmLabels(dv), 1);
    REQUIRE(sr.selected.size() == 1);
    CHECK(sr.selected[0] == 0);
    CHECK(sr.scores[0] > 0.0);
    CHECK(sr.scores[1] == 0.0);
    CHECK(sr.scores[2] == 0.0);
}

TEST_CASE("q at or beyond p saturates in score order") {
    Rng rng(2);
    const std::size_t n = 30, p = 5;
    Matrix x = testutil::random_matrix(rng, n, p);
    auto yv = testutil::normal_vec(rng, n);
    std::vector<std::uint8_t> dv(n);
    for (std::size_t i = 0; i < n; ++i) dv[i] = i % 2;
    ScreenResult sr = screen(named(std::move(x)), Sample(yv), ArmLabels(dv), 12);
    REQUIRE(sr.selected.size() == p);
    for (std::size_t r = 1; r < p; ++r)
        CHECK(sr.scores[sr.selected[r - 1]] >= sr.scores[sr.selected[r]]);
}

TEST_CASE("scores match independent single-column calls") {
    Rng rng(3);
    const std::size_t n = 40, p = 7;
    Matrix x = testutil::random_matrix(rng, n, p);
    auto yv = testutil::normal_vec(rng, n);
    std::vector<std::uint8_t> dv(n);
    for (std::size_t i = 0; i < n; ++i) dv[i] = rng.bernoulli(0.5) ? 1 : 0;
    FeatureMatrix fm = named(std::move(x));
    Sample y(yv);
    ArmLabels d(dv);
    ScreenResult sr = screen(fm, y, d, 3);
    for (std::size_t j = 0; j < p; ++j) {
        std::vector<double> cj(fm.col(j).begin(), fm.col(j).end());
        CHECK(std::fabs(sr.scores[j] - cond_bcov_sq(Sample(cj), y, d)) <= 1e-15);
    }
}

TEST_CASE("determinism across thread counts") {
    Rng rng(4);
    const std::size_t n = 40, p = 12;
    Matrix x = testutil::random_matrix(rng, n, p);
    auto yv = testutil::normal_vec(rng, n);
    std::vector<std::uint8_t> dv(n);
    for (std::size_t i = 0; i < n; ++i) dv[i] = i % 2;
    FeatureMatrix fm = named(std::move(x));
    Sample y(yv);
    ArmLabels d(dv);
    ScreenResult s1 = screen(fm, y, d, 5, 1);
    ScreenResult s2 = screen(fm, y, d, 5, 2);
    ScreenResult s4 = screen(fm, y, d, 5, 4);
    CHECK(s1.scores == s2.scores);
    CHECK(s1.scores == s4.scores);
    CHECK(s1.selected == s2.selected);
    CHECK(s1.selected == s4.selected);
}

TEST_CASE("monotone nesting and index tie-break") {
    Rng rng(5);
    const std::size_t n = 36, p = 9;
    Matrix x = testutil::random_matrix(rng, n, p);
    // duplicate column 2 into column 6: identical scores, index wins
    for (std::size_t i = 0; i < n; ++i) x.at(i, 6) = x.at(i, 2);
    auto yv = testutil::normal_vec(rng, n);
    std::vector<std::uint8_t> dv(n);
    for (std::size_t i = 0; i < n; ++i) dv[i] = i % 2;
    FeatureMatrix fm = named(std::move(x));
    Sample y(yv);
    ArmLabels d(dv);

    ScreenResult s3 = screen(fm, y, d, 3);
    ScreenResult s7 = screen(fm, y, d, 7);
    for (std::size_t r = 0; r < 3; ++r) CHECK(s3.selected[r] == s7.selected[r]);

    ScreenResult all = screen(fm, y, d, p);
    CHECK(all.scores[2] == all.scores[6]);
    auto pos2 = std::find(all.selected.begin(), all.selected.end(), 2);
    auto pos6 = std::find(all.selected.begin(), all.selected.end(), 6);
    CHECK(pos2 < pos6);
}

TEST_CASE("screening errors") {
    Rng rng(6);
    Matrix x = testutil::random_matrix(rng, 10, 2);
    auto yv = testutil::normal_vec(rng, 10);
    std::vector<std::uint8_t> ones(10, 1);
    CHECK_THROWS_AS(screen(named(std::move(x)), Sample(yv), ArmLabels(ones), 1),
                    degenerate_data);

    Matrix x2 = testutil::random_matrix(rng, 10, 2);
    auto yshort = testutil::normal_vec(rng, 8);
    std::vector<std::uint8_t> d10(10);
    for (std::size_t i = 0; i < 10; ++i) d10[i] = i % 2;
    CHECK_THROWS_AS(screen(named(std::move(x2)), Sample(yshort), ArmLabels(d10), 1),
                    invalid_input);
}

TEST_CASE("signal columns outrank noise at modest size") {
    // miniature of the sure-screening setting: outcome loads on the first
    // four columns, the rest are noise
    int all_found = 0;
    const int seeds = 10;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(Rng::derive_seed(777, s));
        const std::size_t n = 150, p = 60;
        Matrix x = testutil::random_matrix(rng, n, p);
        std::vector<std::uint8_t> dv(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double lp = 0.2 * (x.at(i, 0) + x.at(i, 1)) + 0.3 * (x.at(i, 4) + x.at(i, 5));
            dv[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-lp))) ? 1 : 0;
        }
        std::vector<double> yv(n);
        for (std::size_t i = 0; i < n; ++i) {
            yv[i] = 2.0 * (x.at(i, 0) + x.at(i, 1) + x.at(i, 2) + x.at(i, 3)) +
                    2.0 * dv[i] + rng.normal();
        }
        ScreenResult sr = screen(named(std::move(x)), Sample(yv), ArmLabels(dv), 10);
        bool ok = true;
        for (std::size_t j = 0; j < 4; ++j) {
            ok &= std::find(sr.selected.begin(), sr.selected.end(), j) != sr.selected.end();
        }
        all_found += ok ? 1 : 0;
    }
    CHECK(all_found >= 9);
}

TEST_CASE("q rule helper") {
    CHECK(q_rule_n_over_log_n(300) == 52);  // floor(300 / log 300)
    CHECK(q_rule_n_over_log_n(600) == 93);
}
