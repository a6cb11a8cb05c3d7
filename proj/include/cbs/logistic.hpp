#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cbs/common.hpp"
#include "cbs/lasso.hpp"

namespace cbs {

struct AdaptiveWeights {
    std::vector<double> rho_hat;
    double z_hat = 0.0;  // 1 / max_j rho_hat
    double gamma = 1.0;
    std::vector<double> w_hat;  // (z_hat * rho_j)^gamma, max is exactly 1
};

/// Penalty weights w_j = |z * rho_j|^gamma with z = 1/max_j rho_j.
/// Requires at least one positive score; w_j = 0 iff rho_j = 0, and such
/// columns are excluded from the propensity model outright.
inline AdaptiveWeights compute_weights(std::span<const double> rho_hat, double gamma) {
    if (!(gamma > 0.0)) throw invalid_input("compute_weights: gamma must be > 0");
    AdaptiveWeights aw;
    aw.rho_hat.assign(rho_hat.begin(), rho_hat.end());
    aw.gamma = gamma;
    double rho_max = 0.0;
    for (double r : rho_hat) {
        if (!(r >= 0.0)) throw invalid_input("compute_weights: scores must be >= 0");
        rho_max = std::max(rho_max, r);
    }
    if (rho_max <= 0.0)
        throw degenerate_data("compute_weights: all scores are zero, no outcome-relevant signal");
    aw.z_hat = 1.0 / rho_max;
    aw.w_hat.resize(rho_hat.size());
    for (std::size_t j = 0; j < rho_hat.size(); ++j) {
        // rho_j / rho_max keeps the maximum at exactly 1
        aw.w_hat[j] = rho_hat[j] == 0.0 ? 0.0 : std::pow(rho_hat[j] / rho_max, gamma);
    }
    return aw;
}

struct PsFit {
    std::vector<double> coefficients;
    double intercept = 0.0;
    bool has_intercept = true;
    double lambda_d = 0.0;
    double gamma = 1.0;
    std::vector<double> propensities;  // clamped to [eps, 1-eps]
    std::vector<std::size_t> nonzero_set;
    bool converged = true;
    std::size_t outer_iterations = 0;
    std::vector<double> objective_trace;  // per accepted outer step
};

struct LogisticConfig {
    bool intercept = true;
    double epsilon_clamp = 0.01;
    double tol = 1e-7;
    std::size_t max_outer = 200;
    double inner_tol = 1e-9;
    std::size_t max_inner = 2000;
    bool track_objective = false;
};

namespace detail {

inline double expit(double eta) {
    if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
    const double ex = std::exp(eta);
    return ex / (1.0 + ex);
}

inline double softplus(double eta) {  // log(1 + exp(eta)), overflow-safe
    return std::log1p(std::exp(-std::fabs(eta))) + std::max(eta, 0.0);
}

// Negative Bernoulli log-likelihood plus the weighted L1 penalty.
inline double penalized_nll(std::span<const double> eta, std::span<const std::uint8_t> d,
                            std::span<const double> beta, std::span<const double> pen) {
    double nll = 0.0;
    for (std::size_t i = 0; i < eta.size(); ++i) {
        nll += softplus(eta[i]) - (d[i] ? eta[i] : 0.0);
    }
    for (std::size_t j = 0; j < beta.size(); ++j) {
        if (beta[j] != 0.0) nll += pen[j] * std::fabs(beta[j]);
    }
    return nll;
}

inline void compute_eta(const Matrix& x, std::span<const double> beta, double b0,
                        std::vector<double>& eta) {
    const std::size_t n = x.rows();
    eta.assign(n, b0);
    for (std::size_t j = 0; j < beta.size(); ++j) {
        if (beta[j] == 0.0) continue;
        auto c = x.col(j);
        for (std::size_t i = 0; i < n; ++i) eta[i] += beta[j] * c[i];
    }
}

}  // namespace detail

/// Adaptive-lasso logistic propensity fit: IRLS outer loop with a
/// weighted soft-threshold coordinate descent inner solver. Per-column
/// weights follow the convention
///   w_j > 0 finite : penalty lambda_d / w_j
///   w_j = 0        : column excluded, coefficient pinned to 0
///   w_j = +inf     : unpenalized column
/// A quadratic step is only accepted if the true penalized objective does
/// not increase; otherwise the step is halved toward the previous
/// iterate. Hitting the outer iteration cap flags the fit.
inline PsFit fit_alasso_logistic(const Matrix& x, const ArmLabels& d, double lambda_d,
                                 std::span<const double> w, const LogisticConfig& cfg = {},
                                 const PsFit* warm = nullptr) {
    const std::size_t n = x.rows(), m = x.cols();
    if (n != d.size()) throw invalid_input("fit_alasso_logistic: dimension mismatch");
    if (w.size() != m) throw invalid_input("fit_alasso_logistic: weight length mismatch");
    if (d.n1() == 0 || d.n0() == 0)
        throw degenerate_data("fit_alasso_logistic: single-arm data");
    if (!(lambda_d >= 0.0) || !std::isfinite(lambda_d))
        throw invalid_input("fit_alasso_logistic: lambda_d must be finite and >= 0");
    require_finite(x.storage(), "fit_alasso_logistic design");

    std::vector<double> pen(m, 0.0);
    std::vector<std::uint8_t> excluded(m, 0);
    for (std::size_t j = 0; j < m; ++j) {
        if (w[j] == 0.0) {
            excluded[j] = 1;
        } else if (std::isinf(w[j])) {
            pen[j] = 0.0;
        } else if (w[j] > 0.0) {
            pen[j] = lambda_d / w[j];
        } else {
            throw invalid_input("fit_alasso_logistic: weights must be >= 0");
        }
    }

    PsFit fit;
    fit.has_intercept = cfg.intercept;
    fit.lambda_d = lambda_d;
    std::vector<double> beta(m, 0.0);
    double b0 = 0.0;
    if (warm != nullptr && warm->coefficients.size() == m) {
        beta = warm->coefficients;
        for (std::size_t j = 0; j < m; ++j) {
            if (excluded[j]) beta[j] = 0.0;
        }
        b0 = cfg.intercept ? warm->intercept : 0.0;
    } else if (cfg.intercept) {
        const double om = d.omega_hat();
        b0 = std::log(om / (1.0 - om));
    }

    std::vector<double> eta, irls_w(n), zres(n), sxw(m);
    detail::compute_eta(x, beta, b0, eta);
    double obj = detail::penalized_nll(eta, d.values(), beta, pen);

    bool converged = false;
    std::size_t outer = 0;
    std::vector<double> beta_prev(m), eta_cand;
    while (outer < cfg.max_outer) {
        ++outer;
        beta_prev = beta;
        const double b0_prev = b0;

        // quadratic approximation at the current iterate
        for (std::size_t i = 0; i < n; ++i) {
            const double e = detail::expit(eta[i]);
            const double wi = std::max(e * (1.0 - e), 1e-10);
            irls_w[i] = wi;
            zres[i] = (static_cast<double>(d[i]) - e) / wi;  // z_i - eta_i
        }
        double sw = 0.0;
        for (std::size_t i = 0; i < n; ++i) sw += irls_w[i];
        for (std::size_t j = 0; j < m; ++j) {
            if (excluded[j]) continue;
            auto c = x.col(j);
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += irls_w[i] * c[i] * c[i];
            sxw[j] = s;
        }

        // inner CD on 0.5*sum w (z - b0 - x'beta)^2 + sum pen_j |beta_j|;
        // zres holds the working residual z - b0 - x'beta throughout
        std::size_t inner = 0;
        while (inner < cfg.max_inner) {
            ++inner;
            double max_change = 0.0;
            if (cfg.intercept) {
                double num = 0.0;
                for (std::size_t i = 0; i < n; ++i) num += irls_w[i] * zres[i];
                const double delta0 = num / sw;
                if (delta0 != 0.0) {
                    b0 += delta0;
                    for (std::size_t i = 0; i < n; ++i) zres[i] -= delta0;
                    max_change = std::max(max_change, std::fabs(delta0));
                }
            }
            for (std::size_t j = 0; j < m; ++j) {
                if (excluded[j] || sxw[j] <= 0.0) continue;
                auto c = x.col(j);
                double num = 0.0;
                for (std::size_t i = 0; i < n; ++i) num += irls_w[i] * c[i] * zres[i];
                num += beta[j] * sxw[j];
                const double bj = detail::soft_threshold(num, pen[j]) / sxw[j];
                const double delta = bj - beta[j];
                if (delta != 0.0) {
                    beta[j] = bj;
                    for (std::size_t i = 0; i < n; ++i) zres[i] -= delta * c[i];
                    max_change = std::max(max_change, std::fabs(delta));
                }
            }
            if (max_change < cfg.inner_tol) break;
        }

        // accept only if the true objective does not increase; halve back
        // toward the previous iterate otherwise
        detail::compute_eta(x, beta, b0, eta_cand);
        double obj_cand = detail::penalized_nll(eta_cand, d.values(), beta, pen);
        std::size_t halvings = 0;
        while (obj_cand > obj + 1e-10 && halvings < 40) {
            ++halvings;
            for (std::size_t j = 0; j < m; ++j) beta[j] = 0.5 * (beta[j] + beta_prev[j]);
            b0 = 0.5 * (b0 + b0_prev);
            detail::compute_eta(x, beta, b0, eta_cand);
            obj_cand = detail::penalized_nll(eta_cand, d.values(), beta, pen);
        }
        if (obj_cand > obj + 1e-10) {
            // no descent direction left at this quadratic; restore and stop
            beta = beta_prev;
            b0 = b0_prev;
            detail::compute_eta(x, beta, b0, eta);
            converged = true;
            break;
        }
        eta.swap(eta_cand);
        obj = obj_cand;
        if (cfg.track_objective) fit.objective_trace.push_back(obj);

        double step = std::fabs(b0 - b0_prev);
        for (std::size_t j = 0; j < m; ++j)
            step = std::max(step, std::fabs(beta[j] - beta_prev[j]));
        if (step < cfg.tol) {
            converged = true;
            break;
        }
    }

    fit.converged = converged;
    fit.outer_iterations = outer;
    fit.coefficients = std::move(beta);
    fit.intercept = b0;
    for (std::size_t j = 0; j < m; ++j) {
        if (fit.coefficients[j] != 0.0) fit.nonzero_set.push_back(j);
    }
    fit.propensities.resize(n);
    const double lo = cfg.epsilon_clamp, hi = 1.0 - cfg.epsilon_clamp;
    for (std::size_t i = 0; i < n; ++i) {
        fit.propensities[i] = std::clamp(detail::expit(eta[i]), lo, hi);
    }
    return fit;
}

namespace detail {

// tau-weighted treated/control mean gap of each column, combined with
// caller-chosen per-column magnitudes.
inline double wamd_weighted(std::span<const double> magnitudes,
                            std::span<const double> propensities, const Matrix& x,
                            const ArmLabels& d) {
    const std::size_t n = x.rows();
    double sw1 = 0.0, sw0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double tau = d[i] ? 1.0 / propensities[i] : 1.0 / (1.0 - propensities[i]);
        (d[i] ? sw1 : sw0) += tau;
    }
    double total = 0.0;
    for (std::size_t j = 0; j < magnitudes.size(); ++j) {
        if (magnitudes[j] == 0.0) continue;
        auto c = x.col(j);
        double m1 = 0.0, m0 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double tau = d[i] ? 1.0 / propensities[i] : 1.0 / (1.0 - propensities[i]);
            (d[i] ? m1 : m0) += tau * c[i];
        }
        total += std::fabs(magnitudes[j]) * std::fabs(m1 / sw1 - m0 / sw0);
    }
    return total;
}

}  // namespace detail

/// Weighted absolute mean difference of the fitted propensity model:
/// sum_j |beta_j| * |tau-weighted treated mean - tau-weighted control
/// mean| with tau_i = D_i/e_i + (1-D_i)/(1-e_i) from the clamped
/// propensities.
inline double wamd(const PsFit& fit, const Matrix& x, const ArmLabels& d) {
    if (x.rows() != d.size() || x.rows() != fit.propensities.size() ||
        x.cols() != fit.coefficients.size())
        throw invalid_input("wamd: dimension mismatch");
    return detail::wamd_weighted(fit.coefficients, fit.propensities, x, d);
}

enum class WamdWeighting {
    ps_coefficients,   // the displayed formula, |beta_j| from the same fit
    screening_scores,  // outcome-importance weighting by rho_hat_j
};

struct TuneConfig {
    LogisticConfig logistic;
    WamdWeighting weighting = WamdWeighting::screening_scores;
};

struct WamdGridPoint {
    double gamma = 0.0;
    double lambda_d = 0.0;
    double wamd_literal = 0.0;    // |beta_j|-weighted, as displayed
    double wamd_selection = 0.0;  // value the tuner minimized
    std::vector<double> coefficients;
    double intercept = 0.0;
    std::size_t nonzero_count = 0;
    bool converged = true;
};

struct WamdReport {
    std::vector<WamdGridPoint> grid;  // gamma-major, lambda descending
    std::size_t chosen = 0;
    PsFit chosen_fit;
    AdaptiveWeights chosen_weights;
    bool degenerate = false;  // chosen fit has no nonzero coefficients
    WamdWeighting weighting = WamdWeighting::screening_scores;
    bool any_nonconverged = false;
};

/// Penalty level that zeroes every penalized coefficient at gamma = 1,
/// evaluated at the intercept-only model. Columns past the score vector
/// are treated as unpenalized.
inline double ps_lambda_max(const Matrix& x, const ArmLabels& d, std::span<const double> rho,
                            const LogisticConfig& cfg = {}) {
    const AdaptiveWeights aw = compute_weights(rho, 1.0);
    const double e0 = cfg.intercept ? d.omega_hat() : 0.5;
    double lmax = 0.0;
    for (std::size_t j = 0; j < rho.size(); ++j) {
        if (aw.w_hat[j] <= 0.0) continue;
        auto c = x.col(j);
        double g = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i)
            g += c[i] * (e0 - static_cast<double>(d[i]));
        lmax = std::max(lmax, aw.w_hat[j] * std::fabs(g));
    }
    return lmax > 0.0 ? lmax : 1.0;
}

/// Grid search over (gamma, lambda_D) minimizing the weighted absolute
/// mean difference. Fits warm-start along descending lambda within each
/// gamma. Exactly-degenerate fits (every penalized coefficient zero, so
/// the literal criterion is trivially 0) only win when no non-degenerate
/// candidate exists, in which case the report is flagged.
inline WamdReport tune(const Matrix& x, const ArmLabels& d, std::span<const double> rho,
                       std::span<const double> gamma_grid, std::span<const double> lambda_grid,
                       const TuneConfig& cfg = {}) {
    if (gamma_grid.empty() || lambda_grid.empty())
        throw invalid_input("tune: gamma and lambda grids must be nonempty");
    if (rho.size() > x.cols()) throw invalid_input("tune: more scores than columns");

    WamdReport report;
    report.weighting = cfg.weighting;

    const std::size_t q = rho.size();
    std::vector<double> wvec(x.cols(), std::numeric_limits<double>::infinity());

    bool have_best = false, have_best_any = false;
    double best_val = 0.0, best_any_val = 0.0;
    PsFit best_fit, best_any_fit;
    AdaptiveWeights best_w, best_any_w;
    std::size_t best_idx = 0, best_any_idx = 0;

    for (double gamma : gamma_grid) {
        const AdaptiveWeights aw = compute_weights(rho, gamma);
        for (std::size_t j = 0; j < q; ++j) wvec[j] = aw.w_hat[j];
        const PsFit* warm = nullptr;
        PsFit prev;
        for (double lam : lambda_grid) {
            PsFit fit = fit_alasso_logistic(x, d, lam, wvec, cfg.logistic, warm);
            fit.gamma = gamma;

            WamdGridPoint pt;
            pt.gamma = gamma;
            pt.lambda_d = lam;
            pt.coefficients = fit.coefficients;
            pt.intercept = fit.intercept;
            pt.converged = fit.converged;
            if (!fit.converged) report.any_nonconverged = true;
            std::size_t nz_penalized = 0;
            for (std::size_t j = 0; j < q; ++j)
                if (fit.coefficients[j] != 0.0) ++nz_penalized;
            pt.nonzero_count = nz_penalized;
            pt.wamd_literal = detail::wamd_weighted(
                std::span<const double>(fit.coefficients.data(), q), fit.propensities, x, d);
            pt.wamd_selection =
                cfg.weighting == WamdWeighting::ps_coefficients
                    ? pt.wamd_literal
                    : detail::wamd_weighted(rho, fit.propensities, x, d);

            const std::size_t idx = report.grid.size();
            // tie-break: larger lambda_D, then larger gamma
            auto consider = [&](bool& have, double& inc_val, std::size_t& inc_idx,
                               PsFit& inc_fit, AdaptiveWeights& inc_w) {
                bool take = false;
                if (!have) {
                    take = true;
                } else if (pt.wamd_selection < inc_val) {
                    take = true;
                } else if (pt.wamd_selection == inc_val) {
                    const auto& cur = report.grid[inc_idx];
                    if (lam > cur.lambda_d) take = true;
                    else if (lam == cur.lambda_d && gamma > cur.gamma) take = true;
                }
                if (take) {
                    have = true;
                    inc_val = pt.wamd_selection;
                    inc_idx = idx;
                    inc_fit = fit;
                    inc_w = aw;
                }
            };
            if (nz_penalized > 0) consider(have_best, best_val, best_idx, best_fit, best_w);
            consider(have_best_any, best_any_val, best_any_idx, best_any_fit, best_any_w);

            report.grid.push_back(std::move(pt));
            prev = std::move(fit);
            warm = &prev;
        }
    }

    if (have_best) {
        report.chosen = best_idx;
        report.chosen_fit = std::move(best_fit);
        report.chosen_weights = std::move(best_w);
        report.degenerate = false;
    } else {
        report.chosen = best_any_idx;
        report.chosen_fit = std::move(best_any_fit);
        report.chosen_weights = std::move(best_any_w);
        report.degenerate = true;
    }
    return report;
}

}  // namespace cbs
