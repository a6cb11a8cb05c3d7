#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cbs/common.hpp"

namespace cbs {

/// Standard normal CDF via the complementary error function.
inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

/// Inverse standard normal CDF: Acklam's rational approximation refined
/// by one Halley step on the erfc-based CDF. Absolute error well below
/// the 1e-9 target across (0,1).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw invalid_input("normal_quantile: p must be in (0,1)");

    static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
    static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                    -2.400758277161838e+00, -2.549732539343734e+00,
                                    4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double dd[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                     2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
    }

    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    x = x - u / (1.0 + 0.5 * x * u);
    return x;
}

namespace detail {

inline void check_dr_inputs(std::span<const double> y, std::span<const std::uint8_t> d,
                            std::span<const double> e, std::span<const double> b1,
                            std::span<const double> b0) {
    const std::size_t n = y.size();
    if (d.size() != n || e.size() != n || b1.size() != n || b0.size() != n)
        throw invalid_input("dr_estimator: length mismatch");
    if (n == 0) throw invalid_input("dr_estimator: empty sample");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(e[i] > 0.0 && e[i] < 1.0))
            throw invalid_input("dr_estimator: propensity at position " + std::to_string(i) +
                                " is not strictly inside (0,1); clamp first");
    }
}

}  // namespace detail

/// AIPW point estimate: the two-sum difference exactly as displayed,
///   (1/n) sum [D_i Y_i - (D_i-e_i) b1_i]/e_i
/// - (1/n) sum [(1-D_i) Y_i + (D_i-e_i) b0_i]/(1-e_i).
inline double aipw(std::span<const double> y, std::span<const std::uint8_t> d,
                   std::span<const double> e_hat, std::span<const double> b1_hat,
                   std::span<const double> b0_hat) {
    detail::check_dr_inputs(y, d, e_hat, b1_hat, b0_hat);
    const std::size_t n = y.size();
    double s1 = 0.0, s0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double di = static_cast<double>(d[i]);
        s1 += (di * y[i] - (di - e_hat[i]) * b1_hat[i]) / e_hat[i];
        s0 += ((1.0 - di) * y[i] + (di - e_hat[i]) * b0_hat[i]) / (1.0 - e_hat[i]);
    }
    return (s1 - s0) / static_cast<double>(n);
}

/// Influence values
///   phi_i = D(Y-b1)/e - (1-D)(Y-b0)/(1-e) + b1 - b0 - delta
/// and the plug-in variance mean(phi^2).
inline std::pair<std::vector<double>, double> influence_and_variance(
    std::span<const double> y, std::span<const std::uint8_t> d, std::span<const double> e_hat,
    std::span<const double> b1_hat, std::span<const double> b0_hat, double delta_hat) {
    detail::check_dr_inputs(y, d, e_hat, b1_hat, b0_hat);
    if (!std::isfinite(delta_hat)) throw invalid_input("influence_and_variance: delta not finite");
    const std::size_t n = y.size();
    std::vector<double> phi(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double di = static_cast<double>(d[i]);
        phi[i] = di * (y[i] - b1_hat[i]) / e_hat[i] -
                 (1.0 - di) * (y[i] - b0_hat[i]) / (1.0 - e_hat[i]) + b1_hat[i] - b0_hat[i] -
                 delta_hat;
        ss += phi[i] * phi[i];
    }
    return {std::move(phi), ss / static_cast<double>(n)};
}

/// Wald interval [delta - c_m sqrt(v/n), delta + c_m sqrt(v/n)] with
/// c_m = Phi^{-1}(1 - m/2).
inline std::pair<double, double> wald_ci(double delta_hat, double v_hat, std::size_t n,
                                         double m) {
    if (!(v_hat >= 0.0)) throw invalid_input("wald_ci: variance must be >= 0");
    if (n < 1) throw invalid_input("wald_ci: n must be >= 1");
    if (!(m > 0.0 && m < 1.0)) throw invalid_input("wald_ci: significance level must be in (0,1)");
    const double cm = normal_quantile(1.0 - m / 2.0);
    const double half = cm * std::sqrt(v_hat / static_cast<double>(n));
    return {delta_hat - half, delta_hat + half};
}

struct DrEstimate {
    double delta_hat = 0.0;
    double v_hat = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    double level = 0.05;  // significance m
    std::vector<double> influence;
    std::size_t n = 0;
};

inline DrEstimate make_dr_estimate(std::span<const double> y, std::span<const std::uint8_t> d,
                                   std::span<const double> e_hat, std::span<const double> b1_hat,
                                   std::span<const double> b0_hat, double m) {
    DrEstimate out;
    out.n = y.size();
    out.level = m;
    out.delta_hat = aipw(y, d, e_hat, b1_hat, b0_hat);
    auto [phi, v] = influence_and_variance(y, d, e_hat, b1_hat, b0_hat, out.delta_hat);
    out.influence = std::move(phi);
    out.v_hat = v;
    auto [lo, hi] = wald_ci(out.delta_hat, out.v_hat, out.n, m);
    out.ci_lower = lo;
    out.ci_upper = hi;
    return out;
}

}  // namespace cbs
