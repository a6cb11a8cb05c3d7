#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cbs/common.hpp"
#include "cbs/dr.hpp"
#include "cbs/lasso.hpp"
#include "cbs/logistic.hpp"
#include "cbs/rng.hpp"
#include "cbs/screening.hpp"

namespace cbs {

enum class QRule { fixed, n_over_log_n };

struct RunConfig {
    std::size_t q = 30;
    QRule q_rule = QRule::fixed;
    std::vector<double> gamma_grid = {0.5, 1.0, 2.0, 4.0};
    std::size_t lambda_d_grid_size = 25;
    std::size_t lambda_y_grid_size = 30;
    double epsilon_clamp = 0.01;
    std::size_t cv_folds = 10;
    double significance = 0.05;  // m
    std::uint64_t seed = 1;
    bool outcome_intercept = true;
    bool ps_intercept = true;
    bool one_se_rule = false;
    WamdWeighting wamd_weighting = WamdWeighting::screening_scores;
    std::size_t threads = 1;

    void validate() const {
        if (q < 1) throw invalid_input("config: q must be >= 1");
        if (gamma_grid.empty()) throw invalid_input("config: gamma grid must be nonempty");
        if (lambda_d_grid_size < 1 || lambda_y_grid_size < 1)
            throw invalid_input("config: grid sizes must be >= 1");
        if (!(epsilon_clamp > 0.0 && epsilon_clamp < 0.5))
            throw invalid_input("config: epsilon must be in (0, 0.5)");
        if (!(significance > 0.0 && significance < 1.0))
            throw invalid_input("config: significance must be in (0,1)");
        if (cv_folds < 2) throw invalid_input("config: cv_folds must be >= 2");
    }

    std::string canonical_string() const {
        std::ostringstream os;
        os.precision(17);
        os << "q=" << q << ";q_rule=" << (q_rule == QRule::fixed ? "fixed" : "nlogn")
           << ";gamma=";
        for (double g : gamma_grid) os << g << ",";
        os << ";ld_grid=" << lambda_d_grid_size << ";ly_grid=" << lambda_y_grid_size
           << ";eps=" << epsilon_clamp << ";folds=" << cv_folds << ";m=" << significance
           << ";seed=" << seed << ";oi=" << outcome_intercept << ";pi=" << ps_intercept
           << ";1se=" << one_se_rule
           << ";wamd=" << (wamd_weighting == WamdWeighting::ps_coefficients ? "beta" : "rho");
        return os.str();
    }
};

namespace detail {

// Stage seeds are derived from the run seed with fixed tags so every
// stochastic stage has its own reproducible stream.
constexpr std::uint64_t kSeedTagCvArm0 = 101;
constexpr std::uint64_t kSeedTagCvArm1 = 102;

inline std::vector<double> predict_rows(const Matrix& x, const LassoFit& fit) {
    std::vector<double> out(x.rows(), fit.intercept);
    for (std::size_t j : fit.nonzero_set) {
        auto c = x.col(j);
        const double b = fit.coefficients[j];
        for (std::size_t i = 0; i < x.rows(); ++i) out[i] += b * c[i];
    }
    return out;
}

}  // namespace detail

struct StageResult {
    CvReport cv0, cv1;
    LassoFit fit0, fit1;
    WamdReport wamd;
    DrEstimate estimate;
    std::vector<double> b0_hat, b1_hat;  // predictions for every unit
};

/// Steps 3-6 of the procedure on already-screened designs. The first
/// `screened_scores.size()` columns are the screened covariates (penalized,
/// with ball-covariance-derived weights on the propensity side); any extra
/// columns are adjusted but unpenalized in both models.
inline StageResult estimate_stage(const Matrix& or_design, const Matrix& ps_design,
                                  std::span<const double> screened_scores,
                                  std::span<const double> y, const ArmLabels& d,
                                  const RunConfig& cfg) {
    const std::size_t n = y.size();
    const std::size_t k = screened_scores.size();
    if (or_design.rows() != n || ps_design.rows() != n || d.size() != n)
        throw invalid_input("estimate_stage: dimension mismatch");
    if (or_design.cols() < k || ps_design.cols() < k)
        throw invalid_input("estimate_stage: fewer design columns than scores");
    if (d.n1() < std::max<std::size_t>(2, cfg.cv_folds) ||
        d.n0() < std::max<std::size_t>(2, cfg.cv_folds))
        throw degenerate_data("estimate_stage: an arm is smaller than max(2, cv_folds)");

    StageResult res;

    std::vector<std::size_t> idx1, idx0;
    detail::split_by_arm(d.values(), idx1, idx0);

    LassoConfig lcfg;
    lcfg.intercept = cfg.outcome_intercept;
    lcfg.penalty_factor.assign(or_design.cols(), 0.0);
    for (std::size_t j = 0; j < k; ++j) lcfg.penalty_factor[j] = 1.0;

    auto fit_arm = [&](const std::vector<std::size_t>& idx, int arm, std::uint64_t tag,
                       CvReport& cv) {
        Matrix xa = or_design.take_rows(idx);
        std::vector<double> ya(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) ya[r] = y[idx[r]];
        cv = cv_select_lambda(xa, ya, cfg.cv_folds, cfg.lambda_y_grid_size,
                              Rng::derive_seed(cfg.seed, tag), lcfg);
        const double lam =
            cfg.one_se_rule ? cv.lambda_path[one_se_index(cv)] : cv.chosen_lambda;
        return fit_lasso(xa, ya, lam, lcfg, arm);
    };
    res.fit0 = fit_arm(idx0, 0, detail::kSeedTagCvArm0, res.cv0);
    res.fit1 = fit_arm(idx1, 1, detail::kSeedTagCvArm1, res.cv1);
    res.b0_hat = detail::predict_rows(or_design, res.fit0);
    res.b1_hat = detail::predict_rows(or_design, res.fit1);

    TuneConfig tcfg;
    tcfg.logistic.intercept = cfg.ps_intercept;
    tcfg.logistic.epsilon_clamp = cfg.epsilon_clamp;
    tcfg.weighting = cfg.wamd_weighting;
    const double lmax = ps_lambda_max(ps_design, d, screened_scores, tcfg.logistic);
    const std::vector<double> lgrid = make_lambda_grid(lmax, cfg.lambda_d_grid_size, 3.0);
    res.wamd = tune(ps_design, d, screened_scores, cfg.gamma_grid, lgrid, tcfg);

    res.estimate = make_dr_estimate(y, d.values(), res.wamd.chosen_fit.propensities,
                                    res.b1_hat, res.b0_hat, cfg.significance);
    return res;
}

struct ScreenSummaryEntry {
    std::string name;
    std::size_t index = 0;
    double score = 0.0;
};

struct AnalysisReport {
    DrEstimate estimate;
    std::vector<ScreenSummaryEntry> screened;      // kept, descending score
    std::vector<std::string> dropped_duplicates;   // exact duplicates removed after screening
    std::vector<std::string> selected_or;          // nonzero in either arm's outcome fit
    std::vector<std::string> selected_ps;          // nonzero in the chosen propensity fit
    double lambda_y0 = 0.0, lambda_y1 = 0.0, lambda_d = 0.0, gamma = 0.0;
    CvReport cv0, cv1;
    LassoFit outcome_fit0, outcome_fit1;
    WamdReport wamd;
    std::vector<std::string> design_names;  // column names of the fitted designs
    std::size_t q_effective = 0;
    // provenance
    std::uint64_t config_hash = 0;
    std::uint64_t input_digest = 0;
    std::uint64_t seed = 0;
    std::string rng_method;
    std::string wamd_weighting;
    std::string ci_note;

    bool any_nonconvergence() const {
        return !outcome_fit0.converged || !outcome_fit1.converged ||
               !wamd.chosen_fit.converged || wamd.any_nonconverged;
    }
};

namespace detail {

/// Least-squares residuals of y on [1, z]; used only to build the
/// screening outcome when unpenalized covariates are configured.
inline std::vector<double> residualize(std::span<const double> y, const Matrix& z) {
    const std::size_t n = y.size();
    Eigen::MatrixXd zz(n, z.cols() + 1);
    for (std::size_t i = 0; i < n; ++i) zz(i, 0) = 1.0;
    for (std::size_t j = 0; j < z.cols(); ++j) {
        auto c = z.col(j);
        for (std::size_t i = 0; i < n; ++i) zz(i, j + 1) = c[i];
    }
    Eigen::VectorXd yy(n);
    for (std::size_t i = 0; i < n; ++i) yy(i) = y[i];
    const Eigen::VectorXd coef = zz.colPivHouseholderQr().solve(yy);
    std::vector<double> resid(n);
    for (std::size_t i = 0; i < n; ++i) resid[i] = y[i] - zz.row(i).dot(coef);
    return resid;
}

inline std::uint64_t digest_data(const FeatureMatrix& x, std::span<const double> y,
                                 std::span<const std::uint8_t> d) {
    std::uint64_t h = fnv1a64(x.matrix().storage());
    h = fnv1a64(y, h);
    h = fnv1a64(d.data(), d.size(), h);
    for (const auto& nm : x.names()) h = fnv1a64(nm, h);
    return h;
}

}  // namespace detail

/// The end-to-end procedure on user data: screen, dedup, fit both model
/// families, estimate, and assemble the report. `unpenalized` columns are
/// residualized out of the screening outcome and enter both downstream
/// models without penalty.
inline AnalysisReport run_cbs(const FeatureMatrix& x, const Sample& y, const ArmLabels& d,
                              const RunConfig& cfg, const Matrix* unpenalized = nullptr,
                              const std::vector<std::string>* unpenalized_names = nullptr,
                              std::optional<std::uint64_t> input_digest = std::nullopt) {
    cfg.validate();
    const std::size_t n = x.n();
    if (y.size() != n || d.size() != n) throw invalid_input("run_cbs: dimension mismatch");
    if (d.n1() == 0 || d.n0() == 0) throw degenerate_data("run_cbs: degenerate treatment split");
    const std::size_t n_unpen = unpenalized ? unpenalized->cols() : 0;
    if (unpenalized && unpenalized->rows() != n)
        throw invalid_input("run_cbs: unpenalized rows mismatch");
    if (n_unpen > 0 && (!unpenalized_names || unpenalized_names->size() != n_unpen))
        throw invalid_input("run_cbs: unpenalized names mismatch");

    // Step 0: screening outcome (residualized when unpenalized columns exist)
    Sample y_screen = y;
    if (n_unpen > 0) {
        y_screen = Sample(detail::residualize(y.values(), *unpenalized));
    }

    // Steps 1-2: conditional ball covariance screening
    const std::size_t q_eff =
        cfg.q_rule == QRule::n_over_log_n ? std::max<std::size_t>(1, q_rule_n_over_log_n(n))
                                          : cfg.q;
    ScreenResult sr = screen(x, y_screen, d, q_eff, cfg.threads);
    double max_score = 0.0;
    for (double s : sr.scores) max_score = std::max(max_score, s);
    if (max_score <= 0.0)
        throw degenerate_data("run_cbs: all screening scores are zero");

    // Dedup exact-duplicate screened columns, keeping the lowest index
    AnalysisReport report;
    std::vector<std::size_t> kept;
    for (std::size_t idx : sr.selected) {
        bool dup = false;
        auto ci = x.col(idx);
        for (std::size_t prev : kept) {
            auto cp = x.col(prev);
            if (std::equal(ci.begin(), ci.end(), cp.begin())) {
                dup = true;
                break;
            }
        }
        if (dup) {
            report.dropped_duplicates.push_back(x.name(idx));
        } else {
            kept.push_back(idx);
        }
    }

    // kept is in descending-score order; model columns keep that order
    const std::size_t kk = kept.size();
    Matrix design(n, kk + n_unpen);
    std::vector<double> scores_k(kk);
    for (std::size_t c = 0; c < kk; ++c) {
        auto src = x.col(kept[c]);
        auto dst = design.col_mut(c);
        std::copy(src.begin(), src.end(), dst.begin());
        scores_k[c] = sr.scores[kept[c]];
        report.screened.push_back({x.name(kept[c]), kept[c], sr.scores[kept[c]]});
        report.design_names.push_back(x.name(kept[c]));
    }
    for (std::size_t u = 0; u < n_unpen; ++u) {
        auto src = unpenalized->col(u);
        auto dst = design.col_mut(kk + u);
        std::copy(src.begin(), src.end(), dst.begin());
        report.design_names.push_back((*unpenalized_names)[u]);
    }

    // Steps 3-6
    StageResult stage = estimate_stage(design, design, scores_k, y.values(), d, cfg);

    report.estimate = std::move(stage.estimate);
    report.cv0 = std::move(stage.cv0);
    report.cv1 = std::move(stage.cv1);
    report.outcome_fit0 = std::move(stage.fit0);
    report.outcome_fit1 = std::move(stage.fit1);
    report.wamd = std::move(stage.wamd);
    report.lambda_y0 = report.outcome_fit0.lambda;
    report.lambda_y1 = report.outcome_fit1.lambda;
    report.lambda_d = report.wamd.chosen_fit.lambda_d;
    report.gamma = report.wamd.chosen_fit.gamma;
    report.q_effective = q_eff;

    std::vector<std::uint8_t> in_or(report.design_names.size(), 0);
    for (std::size_t j : report.outcome_fit0.nonzero_set) in_or[j] = 1;
    for (std::size_t j : report.outcome_fit1.nonzero_set) in_or[j] = 1;
    for (std::size_t j = 0; j < in_or.size(); ++j) {
        if (in_or[j]) report.selected_or.push_back(report.design_names[j]);
    }
    for (std::size_t j : report.wamd.chosen_fit.nonzero_set) {
        report.selected_ps.push_back(report.design_names[j]);
    }

    report.config_hash = fnv1a64(cfg.canonical_string());
    report.input_digest =
        input_digest ? *input_digest : detail::digest_data(x, y.values(), d.values());
    report.seed = cfg.seed;
    report.rng_method = rng_description();
    report.wamd_weighting =
        cfg.wamd_weighting == WamdWeighting::ps_coefficients ? "ps_coefficients"
                                                             : "screening_scores";
    report.ci_note =
        "Wald interval conditions on the selected adjustment set; "
        "selection uncertainty is not accounted for.";
    return report;
}

}  // namespace cbs
