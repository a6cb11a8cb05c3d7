#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "cbs/ballcov.hpp"
#include "cbs/common.hpp"
#include "cbs/parallel.hpp"

namespace cbs {

struct ScreenResult {
    std::vector<double> scores;         // rho_hat per column, original order
    std::vector<std::size_t> selected;  // top-q column indices, descending score
    std::size_t q = 0;
};

namespace detail {

// Shared y/d-side state for scoring many columns against the same outcome
// and treatment split.
struct CondScoreContext {
    std::vector<std::size_t> idx1, idx0;
    YSideCache y1, y0;
    double omega = 0.0;
    double denom1 = 0.0, denom0 = 0.0;  // n_arm^6

    void build(std::span<const double> y, const ArmLabels& d) {
        if (y.size() != d.size()) throw invalid_input("screen: outcome/treatment length mismatch");
        if (d.n1() < 2 || d.n0() < 2)
            throw degenerate_data("screen: each treatment arm needs >= 2 units (n1=" +
                                  std::to_string(d.n1()) + ", n0=" + std::to_string(d.n0()) +
                                  ")");
        split_by_arm(d.values(), idx1, idx0);
        std::vector<double> tmp;
        gather(y, idx1, tmp);
        y1.build(tmp);
        gather(y, idx0, tmp);
        y0.build(tmp);
        omega = d.omega_hat();
        auto pow6 = [](std::size_t m) {
            const double dm = static_cast<double>(m);
            const double m2 = dm * dm;
            return m2 * m2 * m2;
        };
        denom1 = pow6(idx1.size());
        denom0 = pow6(idx0.size());
    }

    double score_column(std::span<const double> x, BcovWorkspace& ws,
                        std::vector<double>& scratch) const {
        gather(x, idx1, scratch);
        const double b1 = int128_to_double(bcov_pair_sum(scratch, y1, ws)) / denom1;
        gather(x, idx0, scratch);
        const double b0 = int128_to_double(bcov_pair_sum(scratch, y0, ws)) / denom0;
        return omega * b1 + (1.0 - omega) * b0;
    }
};

}  // namespace detail

/// Conditional ball covariance scores for every column; columns are
/// scored independently (parallel across threads, deterministic result).
inline std::vector<double> screen_scores(const FeatureMatrix& x, const Sample& y,
                                         const ArmLabels& d, std::size_t n_threads = 1) {
    if (x.n() != y.size()) throw invalid_input("screen: covariate/outcome length mismatch");
    detail::CondScoreContext ctx;
    ctx.build(y.values(), d);

    std::vector<double> scores(x.p(), 0.0);
    const std::size_t p = x.p();
    // worker-local scratch keyed by a block of column indices would add
    // order dependence; instead give each task its own storage via
    // thread_local reuse
    parallel_for(p, n_threads, [&](std::size_t j) {
        thread_local detail::BcovWorkspace ws;
        thread_local std::vector<double> scratch;
        scores[j] = ctx.score_column(x.col(j), ws, scratch);
    });
    return scores;
}

/// Rank all columns by conditional ball covariance with the outcome given
/// treatment and keep the q highest. Ties break toward the smaller
/// original column index, so the result is deterministic and the selected
/// set for q is a prefix of the one for q' > q.
inline ScreenResult screen(const FeatureMatrix& x, const Sample& y, const ArmLabels& d,
                           std::size_t q, std::size_t n_threads = 1) {
    if (q < 1) throw invalid_input("screen: q must be >= 1");
    ScreenResult out;
    out.scores = screen_scores(x, y, d, n_threads);
    out.q = q;

    std::vector<std::size_t> order(x.p());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (out.scores[a] != out.scores[b]) return out.scores[a] > out.scores[b];
        return a < b;
    });
    const std::size_t keep = std::min(q, x.p());
    out.selected.assign(order.begin(), order.begin() + keep);
    return out;
}

/// The supplement's screening-size alternative to the fixed default.
inline std::size_t q_rule_n_over_log_n(std::size_t n) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) /
                                               std::log(static_cast<double>(n))));
}

}  // namespace cbs
