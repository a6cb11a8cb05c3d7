#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cbs/common.hpp"
#include "cbs/rng.hpp"

namespace cbs {

struct LassoFit {
    std::vector<double> coefficients;  // original data scale
    double intercept = 0.0;
    bool has_intercept = true;
    double lambda = 0.0;
    int arm = -1;
    std::vector<std::size_t> nonzero_set;
    bool converged = true;
    std::size_t sweeps = 0;
    std::vector<double> objective_trace;  // per-sweep, when tracking is on
};

struct LassoConfig {
    bool intercept = true;
    double tol = 1e-7;
    std::size_t max_sweeps = 100000;
    // per-column multiplier on lambda; empty = all ones, 0 = unpenalized
    std::vector<double> penalty_factor;
    bool track_objective = false;
};

struct CvReport {
    std::vector<double> lambda_path;  // strictly decreasing
    std::vector<double> cv_error;     // mean squared prediction error
    std::vector<double> cv_se;        // fold standard errors
    double chosen_lambda = 0.0;
    std::size_t chosen_index = 0;
};

namespace detail {

inline double soft_threshold(double v, double thr) {
    if (v > thr) return v - thr;
    if (v < -thr) return v + thr;
    return 0.0;
}

// Columns centered (when an intercept is in play) and scaled to unit
// population variance; the penalty applies on this scale and the output
// is mapped back. Constant columns cannot be standardized and keep a zero
// coefficient.
struct StandardizedDesign {
    std::size_t n = 0, m = 0;
    std::vector<double> z;  // col-major standardized copy
    std::vector<double> mean, scale, sz2;
    std::vector<std::uint8_t> excluded;
    double ybar = 0.0;
    std::vector<double> ytilde;

    void build(const Matrix& x, std::span<const double> y, bool intercept) {
        n = x.rows();
        m = x.cols();
        z.assign(n * m, 0.0);
        mean.assign(m, 0.0);
        scale.assign(m, 0.0);
        sz2.assign(m, 0.0);
        excluded.assign(m, 0);
        for (std::size_t j = 0; j < m; ++j) {
            auto c = x.col(j);
            double mu = 0.0;
            if (intercept) {
                for (double v : c) mu += v;
                mu /= static_cast<double>(n);
            }
            double ss = 0.0;
            for (double v : c) ss += (v - mu) * (v - mu);
            const double s = std::sqrt(ss / static_cast<double>(n));
            mean[j] = mu;
            scale[j] = s;
            if (s == 0.0) {
                excluded[j] = 1;
                continue;
            }
            double* zj = z.data() + j * n;
            double szz = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                zj[i] = (c[i] - mu) / s;
                szz += zj[i] * zj[i];
            }
            sz2[j] = szz;
        }
        ybar = 0.0;
        if (intercept) {
            for (double v : y) ybar += v;
            ybar /= static_cast<double>(n);
        }
        ytilde.resize(n);
        for (std::size_t i = 0; i < n; ++i) ytilde[i] = y[i] - ybar;
    }
};

inline double lasso_objective_std(const StandardizedDesign& sd, std::span<const double> r,
                                  std::span<const double> a, std::span<const double> pf,
                                  double lambda) {
    double rss = 0.0;
    for (double v : r) rss += v * v;
    double pen = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) pen += pf[j] * std::fabs(a[j]);
    return rss + lambda * pen;
}

// Cyclic coordinate descent with soft-thresholding on the standardized
// scale. `a` and the residual r = ytilde - Z a are updated in place so
// paths can warm-start.
inline void cd_solve(const StandardizedDesign& sd, std::span<const double> pf, double lambda,
                     std::vector<double>& a, std::vector<double>& r, const LassoConfig& cfg,
                     std::size_t& sweeps, bool& converged,
                     std::vector<double>* objective_trace) {
    const std::size_t n = sd.n, m = sd.m;
    converged = false;
    sweeps = 0;
    while (sweeps < cfg.max_sweeps) {
        ++sweeps;
        double max_change = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            if (sd.excluded[j]) continue;
            const double* zj = sd.z.data() + j * n;
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += zj[i] * r[i];
            const double cj = dot + a[j] * sd.sz2[j];
            const double thr = lambda * pf[j] / 2.0;
            const double aj_new = soft_threshold(cj, thr) / sd.sz2[j];
            const double delta = aj_new - a[j];
            if (delta != 0.0) {
                for (std::size_t i = 0; i < n; ++i) r[i] -= delta * zj[i];
                a[j] = aj_new;
                const double ad = std::fabs(delta);
                if (ad > max_change) max_change = ad;
            }
        }
        if (objective_trace) {
            objective_trace->push_back(lasso_objective_std(sd, r, a, pf, lambda));
        }
        if (max_change < cfg.tol) {
            converged = true;
            break;
        }
    }
}

inline std::vector<double> resolve_penalty_factor(const LassoConfig& cfg, std::size_t m) {
    if (cfg.penalty_factor.empty()) return std::vector<double>(m, 1.0);
    if (cfg.penalty_factor.size() != m)
        throw invalid_input("fit_lasso: penalty_factor length mismatch");
    return cfg.penalty_factor;
}

inline LassoFit destandardize(const StandardizedDesign& sd, const std::vector<double>& a,
                              const LassoConfig& cfg, double lambda) {
    LassoFit fit;
    fit.lambda = lambda;
    fit.has_intercept = cfg.intercept;
    fit.coefficients.assign(sd.m, 0.0);
    double dot_mean = 0.0;
    for (std::size_t j = 0; j < sd.m; ++j) {
        if (sd.excluded[j] || a[j] == 0.0) continue;
        fit.coefficients[j] = a[j] / sd.scale[j];
        fit.nonzero_set.push_back(j);
        dot_mean += fit.coefficients[j] * sd.mean[j];
    }
    fit.intercept = cfg.intercept ? sd.ybar - dot_mean : 0.0;
    return fit;
}

}  // namespace detail

/// L1-penalized least squares, objective sum_i (y_i - b0 - x_i'a)^2 +
/// lambda * sum_j pf_j |a_j| with the penalty taken on internally
/// standardized columns and an unpenalized intercept by default.
/// Non-convergence within the sweep budget is flagged, not thrown.
inline LassoFit fit_lasso(const Matrix& x, std::span<const double> y, double lambda,
                          const LassoConfig& cfg = {}, int arm = -1) {
    if (x.rows() != y.size()) throw invalid_input("fit_lasso: dimension mismatch");
    if (x.rows() < 2) throw invalid_input("fit_lasso: need at least 2 rows");
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw invalid_input("fit_lasso: lambda must be finite and >= 0");
    require_finite(y, "fit_lasso outcome");
    require_finite(x.storage(), "fit_lasso design");

    detail::StandardizedDesign sd;
    sd.build(x, y, cfg.intercept);
    const auto pf = detail::resolve_penalty_factor(cfg, x.cols());

    std::vector<double> a(x.cols(), 0.0);
    std::vector<double> r = sd.ytilde;
    std::size_t sweeps = 0;
    bool converged = false;
    std::vector<double> trace;
    detail::cd_solve(sd, pf, lambda, a, r, cfg, sweeps, converged,
                     cfg.track_objective ? &trace : nullptr);

    LassoFit fit = detail::destandardize(sd, a, cfg, lambda);
    fit.arm = arm;
    fit.converged = converged;
    fit.sweeps = sweeps;
    fit.objective_trace = std::move(trace);
    return fit;
}

/// Smallest penalty that keeps every penalized coefficient at zero.
inline double lasso_lambda_max(const Matrix& x, std::span<const double> y,
                               const LassoConfig& cfg = {}) {
    detail::StandardizedDesign sd;
    sd.build(x, y, cfg.intercept);
    const auto pf = detail::resolve_penalty_factor(cfg, x.cols());
    double lmax = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
        if (sd.excluded[j] || pf[j] <= 0.0) continue;
        const double* zj = sd.z.data() + j * sd.n;
        double dot = 0.0;
        for (std::size_t i = 0; i < sd.n; ++i) dot += zj[i] * sd.ytilde[i];
        lmax = std::max(lmax, 2.0 * std::fabs(dot) / pf[j]);
    }
    return lmax > 0.0 ? lmax : 1.0;
}

inline std::vector<double> make_lambda_grid(double lambda_max, std::size_t size,
                                            double decades) {
    if (size < 1) throw invalid_input("lambda grid needs size >= 1");
    std::vector<double> grid(size);
    for (std::size_t k = 0; k < size; ++k) {
        const double expo =
            size == 1 ? 0.0
                      : -decades * static_cast<double>(k) / static_cast<double>(size - 1);
        grid[k] = lambda_max * std::pow(10.0, expo);
    }
    return grid;
}

/// 10-fold (by default) cross-validation over a two-decade grid below
/// lambda_max. Folds are contiguous blocks of a seeded uniform shuffle;
/// error ties resolve toward the larger (sparser) lambda.
inline CvReport cv_select_lambda(const Matrix& x, std::span<const double> y, std::size_t folds,
                                 std::size_t grid_size, std::uint64_t seed,
                                 const LassoConfig& cfg = {}) {
    const std::size_t n = x.rows();
    if (n != y.size()) throw invalid_input("cv_select_lambda: dimension mismatch");
    if (folds < 2) throw invalid_input("cv_select_lambda: need >= 2 folds");
    if (n < folds) throw invalid_input("cv_select_lambda: arm smaller than fold count");

    CvReport report;
    report.lambda_path = make_lambda_grid(lasso_lambda_max(x, y, cfg), grid_size, 2.0);
    const std::size_t g = report.lambda_path.size();

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    rng.shuffle(perm);

    // fold_mse[f][k]
    std::vector<std::vector<double>> fold_mse(folds, std::vector<double>(g, 0.0));
    const auto pf = detail::resolve_penalty_factor(cfg, x.cols());

    for (std::size_t f = 0; f < folds; ++f) {
        const std::size_t lo = f * n / folds;
        const std::size_t hi = (f + 1) * n / folds;
        std::vector<std::size_t> valid(perm.begin() + lo, perm.begin() + hi);
        std::vector<std::size_t> train;
        train.reserve(n - valid.size());
        train.insert(train.end(), perm.begin(), perm.begin() + lo);
        train.insert(train.end(), perm.begin() + hi, perm.end());

        Matrix xt = x.take_rows(train);
        std::vector<double> yt(train.size());
        for (std::size_t r = 0; r < train.size(); ++r) yt[r] = y[train[r]];

        detail::StandardizedDesign sd;
        sd.build(xt, yt, cfg.intercept);
        std::vector<double> a(x.cols(), 0.0);
        std::vector<double> resid = sd.ytilde;
        for (std::size_t k = 0; k < g; ++k) {
            std::size_t sweeps = 0;
            bool conv = false;
            detail::cd_solve(sd, pf, report.lambda_path[k], a, resid, cfg, sweeps, conv,
                             nullptr);
            LassoFit fk = detail::destandardize(sd, a, cfg, report.lambda_path[k]);
            double sse = 0.0;
            for (std::size_t vi : valid) {
                double pred = fk.intercept;
                for (std::size_t j : fk.nonzero_set) pred += fk.coefficients[j] * x.at(vi, j);
                const double e = y[vi] - pred;
                sse += e * e;
            }
            fold_mse[f][k] = sse / static_cast<double>(valid.size());
        }
    }

    report.cv_error.assign(g, 0.0);
    report.cv_se.assign(g, 0.0);
    for (std::size_t k = 0; k < g; ++k) {
        double mu = 0.0;
        for (std::size_t f = 0; f < folds; ++f) mu += fold_mse[f][k];
        mu /= static_cast<double>(folds);
        double ss = 0.0;
        for (std::size_t f = 0; f < folds; ++f) {
            const double dv = fold_mse[f][k] - mu;
            ss += dv * dv;
        }
        report.cv_error[k] = mu;
        report.cv_se[k] =
            std::sqrt(ss / static_cast<double>(folds - 1)) / std::sqrt(static_cast<double>(folds));
    }

    std::size_t best = 0;
    for (std::size_t k = 1; k < g; ++k) {
        if (report.cv_error[k] < report.cv_error[best]) best = k;  // ties keep larger lambda
    }
    report.chosen_index = best;
    report.chosen_lambda = report.lambda_path[best];
    return report;
}

/// One-standard-error alternative: largest lambda whose CV error is
/// within one fold-SE of the minimum. Not the default rule.
inline std::size_t one_se_index(const CvReport& report) {
    const double bound = report.cv_error[report.chosen_index] + report.cv_se[report.chosen_index];
    for (std::size_t k = 0; k < report.lambda_path.size(); ++k) {
        if (report.cv_error[k] <= bound) return k;
    }
    return report.chosen_index;
}

inline double predict(const LassoFit& fit, std::span<const double> row) {
    if (row.size() != fit.coefficients.size())
        throw invalid_input("predict: dimension mismatch");
    double out = fit.intercept;
    for (std::size_t j : fit.nonzero_set) out += fit.coefficients[j] * row[j];
    return out;
}

}  // namespace cbs
