#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cbs/common.hpp"
#include "cbs/parallel.hpp"
#include "cbs/pipeline.hpp"
#include "cbs/rng.hpp"

namespace cbs {

enum class Scenario { linear, misspec };
enum class AnalystModel { correct, squared_ps, squared_or, squared_both };

inline const char* analyst_model_name(AnalystModel m) {
    switch (m) {
        case AnalystModel::correct: return "correct";
        case AnalystModel::squared_ps: return "squared_ps";
        case AnalystModel::squared_or: return "squared_or";
        case AnalystModel::squared_both: return "squared_both";
    }
    return "?";
}

struct DgpSpec {
    std::size_t n = 300;
    std::size_t p = 100;
    Scenario scenario = Scenario::linear;
    AnalystModel analyst_model = AnalystModel::correct;
    double true_delta = 2.0;
    std::uint64_t seed = 1;
};

struct SimData {
    FeatureMatrix x;
    Sample y;
    ArmLabels d;
};

/// Mean structure of the outcome equation (no treatment term, no noise).
inline double dgp_outcome_mean(Scenario s, std::span<const double> row) {
    if (s == Scenario::linear) {
        return 2.0 * (row[0] + row[1] + row[2] + row[3]);
    }
    return 2.0 * (row[0] + row[1]) + 2.0 * (row[2] * row[2] + row[3] * row[3]);
}

/// Linear predictor of the treatment equation.
inline double dgp_treatment_logit(std::span<const double> row) {
    return 0.2 * (row[0] + row[1]) + 0.3 * (row[4] + row[5]);
}

/// One synthetic dataset. Covariates are iid U(-1,1); treatment is
/// Bernoulli(expit(0.2(X1+X2) + 0.3(X5+X6) [+ latent N(0,1) in the
/// misspec design])); the outcome adds D*delta and N(0,1) noise to the
/// scenario's mean structure. Fully determined by (spec.seed, run_index)
/// through the counter-derived stream, independent of scheduling.
inline SimData generate(const DgpSpec& spec, std::uint64_t run_index) {
    const std::size_t n = spec.n, p = spec.p;
    if (p < 6) throw invalid_input("generate: DGP needs p >= 6");
    Rng rng(Rng::derive_seed(spec.seed, run_index));

    Matrix x(n, p);
    for (std::size_t j = 0; j < p; ++j) {
        auto c = x.col_mut(j);
        for (std::size_t i = 0; i < n; ++i) c[i] = rng.uniform(-1.0, 1.0);
    }

    std::vector<double> row(p);
    auto fill_row = [&](std::size_t i) {
        for (std::size_t j = 0; j < p; ++j) row[j] = x.at(i, j);
    };

    std::vector<std::uint8_t> d(n);
    for (std::size_t i = 0; i < n; ++i) {
        fill_row(i);
        double lp = dgp_treatment_logit(row);
        if (spec.scenario == Scenario::misspec) lp += rng.normal();
        d[i] = rng.bernoulli(detail::expit(lp)) ? 1 : 0;
    }

    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        fill_row(i);
        y[i] = dgp_outcome_mean(spec.scenario, row) +
               spec.true_delta * static_cast<double>(d[i]) + rng.normal();
    }

    std::vector<std::string> names(p);
    for (std::size_t j = 0; j < p; ++j) names[j] = "X" + std::to_string(j + 1);
    return SimData{FeatureMatrix(std::move(x), std::move(names)), Sample(std::move(y)),
                   ArmLabels(std::move(d))};
}

/// The analyst's (possibly misspecified) model designs: squared columns
/// replace the raw ones in whichever model family the cell distorts.
struct AnalystDesigns {
    Matrix or_design;
    Matrix ps_design;
};

inline Matrix square_columns(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t j = 0; j < m.cols(); ++j) {
        auto src = m.col(j);
        auto dst = out.col_mut(j);
        for (std::size_t i = 0; i < m.rows(); ++i) dst[i] = src[i] * src[i];
    }
    return out;
}

inline AnalystDesigns apply_analyst_model(const Matrix& screened, AnalystModel m) {
    const bool sq_or = (m == AnalystModel::squared_or || m == AnalystModel::squared_both);
    const bool sq_ps = (m == AnalystModel::squared_ps || m == AnalystModel::squared_both);
    AnalystDesigns out;
    out.or_design = sq_or ? square_columns(screened) : screened;
    out.ps_design = sq_ps ? square_columns(screened) : screened;
    return out;
}

namespace detail {

struct KahanSum {
    double sum = 0.0, carry = 0.0;
    void add(double v) {
        const double t = v - carry;
        const double s = sum + t;
        carry = (s - sum) - t;
        sum = s;
    }
};

inline double quantile_sorted(const std::vector<double>& sorted, double prob) {
    if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double h = prob * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace detail

struct McSummary {
    std::size_t runs = 0;  // requested
    std::size_t completed = 0;
    std::size_t failures = 0;
    double bias_x100 = 0.0, bias_se_x100 = 0.0;
    double mse_x100 = 0.0, mse_se_x100 = 0.0;
    double coverage_pct = 0.0;
    std::vector<double> per_run_estimates;  // completed runs, run order
    std::vector<double> per_run_vhat;
    std::vector<std::uint8_t> per_run_covered;
    std::vector<std::uint64_t> run_indices;
};

namespace detail {

// Slot for one Monte Carlo run; workers fill disjoint slots, the
// aggregation is a fixed-order reduction afterwards.
struct RunSlot {
    bool ok = false;
    double delta = 0.0;
    double vhat = 0.0;
    std::uint8_t covered = 0;
    std::string error;
};

inline McSummary aggregate_slots(const std::vector<RunSlot>& slots, double true_delta) {
    McSummary out;
    out.runs = slots.size();
    KahanSum s_delta, s_sq, s_cov;
    for (std::size_t r = 0; r < slots.size(); ++r) {
        const auto& sl = slots[r];
        if (!sl.ok) {
            ++out.failures;
            continue;
        }
        ++out.completed;
        out.per_run_estimates.push_back(sl.delta);
        out.per_run_vhat.push_back(sl.vhat);
        out.per_run_covered.push_back(sl.covered);
        out.run_indices.push_back(r);
        s_delta.add(sl.delta);
        const double err = sl.delta - true_delta;
        s_sq.add(err * err);
        s_cov.add(sl.covered ? 1.0 : 0.0);
    }
    if (out.completed == 0) throw degenerate_data("run_mc: every run failed");
    const double m = static_cast<double>(out.completed);
    const double mean_delta = s_delta.sum / m;
    const double mean_sq = s_sq.sum / m;
    out.bias_x100 = 100.0 * (mean_delta - true_delta);
    out.mse_x100 = 100.0 * mean_sq;
    out.coverage_pct = 100.0 * s_cov.sum / m;
    // SEs as sample sd over runs / sqrt(runs)
    KahanSum v_delta, v_sq;
    for (std::size_t i = 0; i < out.per_run_estimates.size(); ++i) {
        const double dd = out.per_run_estimates[i] - mean_delta;
        v_delta.add(dd * dd);
        const double e2 = (out.per_run_estimates[i] - true_delta) *
                          (out.per_run_estimates[i] - true_delta) -
                          mean_sq;
        v_sq.add(e2 * e2);
    }
    if (out.completed > 1) {
        out.bias_se_x100 = 100.0 * std::sqrt(v_delta.sum / (m - 1.0)) / std::sqrt(m);
        out.mse_se_x100 = 100.0 * std::sqrt(v_sq.sum / (m - 1.0)) / std::sqrt(m);
    }
    return out;
}

}  // namespace detail

/// Monte Carlo reproduction of one simulation cell: per run, generate,
/// run the full procedure, record the estimate and whether the interval
/// covers the true effect. Per-run failures are tolerated up to 5%.
inline McSummary run_mc(const DgpSpec& spec, std::size_t runs, const RunConfig& base_cfg,
                        std::size_t threads = 1) {
    if (runs < 2) throw invalid_input("run_mc: need runs >= 2");
    std::vector<detail::RunSlot> slots(runs);
    parallel_for(runs, threads, [&](std::size_t r) {
        auto& slot = slots[r];
        try {
            SimData data = generate(spec, r);
            RunConfig cfg = base_cfg;
            cfg.threads = 1;  // parallelism lives at the run level here
            cfg.seed = Rng::derive_seed(spec.seed, 1000000ull + r);
            AnalysisReport rep = run_cbs(data.x, data.y, data.d, cfg);
            slot.delta = rep.estimate.delta_hat;
            slot.vhat = rep.estimate.v_hat;
            slot.covered = (rep.estimate.ci_lower <= spec.true_delta &&
                            spec.true_delta <= rep.estimate.ci_upper)
                               ? 1
                               : 0;
            slot.ok = true;
        } catch (const std::exception& e) {
            slot.ok = false;
            slot.error = e.what();
        }
    });
    McSummary out = detail::aggregate_slots(slots, spec.true_delta);
    if (static_cast<double>(out.failures) > 0.05 * static_cast<double>(runs)) {
        throw degenerate_data("run_mc: more than 5% of runs failed (" +
                              std::to_string(out.failures) + "/" + std::to_string(runs) + ")");
    }
    return out;
}

struct DrCell {
    AnalystModel model = AnalystModel::correct;
    std::vector<double> estimates;  // completed runs, run order
    std::size_t failures = 0;
    double median = 0.0, q1 = 0.0, q3 = 0.0;
};

/// Double-robustness study: the four analyst-model cells share each run's
/// dataset and screening pass (screening is model-free); only the model
/// designs differ downstream.
inline std::array<DrCell, 4> run_dr_study(std::size_t runs, std::size_t n, std::size_t p,
                                          std::uint64_t seed, const RunConfig& base_cfg,
                                          std::size_t threads = 1) {
    if (runs < 2) throw invalid_input("run_dr_study: need runs >= 2");
    static constexpr std::array<AnalystModel, 4> kCells = {
        AnalystModel::correct, AnalystModel::squared_ps, AnalystModel::squared_or,
        AnalystModel::squared_both};

    struct CellSlot {
        bool ok = false;
        double delta = 0.0;
    };
    std::vector<std::array<CellSlot, 4>> slots(runs);

    DgpSpec spec;
    spec.n = n;
    spec.p = p;
    spec.scenario = Scenario::misspec;
    spec.seed = seed;

    parallel_for(runs, threads, [&](std::size_t r) {
        SimData data;
        ScreenResult sr;
        RunConfig cfg = base_cfg;
        cfg.threads = 1;
        cfg.seed = Rng::derive_seed(seed, 2000000ull + r);
        try {
            data = generate(spec, r);
            sr = screen(data.x, data.y, data.d, cfg.q, 1);
        } catch (const std::exception&) {
            return;  // all four cells fail for this run
        }
        const std::size_t kk = std::min(cfg.q, data.x.p());
        Matrix screened(data.x.n(), kk);
        std::vector<double> scores_k(kk);
        for (std::size_t c = 0; c < kk; ++c) {
            auto src = data.x.col(sr.selected[c]);
            std::copy(src.begin(), src.end(), screened.col_mut(c).begin());
            scores_k[c] = sr.scores[sr.selected[c]];
        }
        for (std::size_t cell = 0; cell < 4; ++cell) {
            try {
                AnalystDesigns designs = apply_analyst_model(screened, kCells[cell]);
                StageResult stage =
                    estimate_stage(designs.or_design, designs.ps_design, scores_k,
                                   data.y.values(), data.d, cfg);
                slots[r][cell].delta = stage.estimate.delta_hat;
                slots[r][cell].ok = true;
            } catch (const std::exception&) {
                slots[r][cell].ok = false;
            }
        }
    });

    std::array<DrCell, 4> cells;
    for (std::size_t c = 0; c < 4; ++c) {
        cells[c].model = kCells[c];
        for (std::size_t r = 0; r < runs; ++r) {
            if (slots[r][c].ok) {
                cells[c].estimates.push_back(slots[r][c].delta);
            } else {
                ++cells[c].failures;
            }
        }
        if (static_cast<double>(cells[c].failures) > 0.05 * static_cast<double>(runs)) {
            throw degenerate_data("run_dr_study: more than 5% of runs failed in cell " +
                                  std::string(analyst_model_name(kCells[c])));
        }
        std::vector<double> sorted = cells[c].estimates;
        std::sort(sorted.begin(), sorted.end());
        cells[c].median = detail::quantile_sorted(sorted, 0.5);
        cells[c].q1 = detail::quantile_sorted(sorted, 0.25);
        cells[c].q3 = detail::quantile_sorted(sorted, 0.75);
    }
    return cells;
}

}  // namespace cbs
