// Test-side generators and independent oracles. Everything here stays
// deliberately separate from the library's computation paths: the
// oracles re-derive results from first principles (dense linear algebra,
// Newton iterations, bisection) so the two routes can disagree.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "cbs/common.hpp"
#include "cbs/rng.hpp"

namespace testutil {

inline std::vector<double> uniform_vec(cbs::Rng& rng, std::size_t n, double a = -1.0,
                                       double b = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(a, b);
    return v;
}

inline std::vector<double> normal_vec(cbs::Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

// Rounds entries to a coarse grid so duplicates and distance ties occur.
inline std::vector<double> tied_vec(cbs::Rng& rng, std::size_t n, int levels = 4) {
    std::vector<double> v(n);
    for (auto& x : v)
        x = static_cast<double>(static_cast<int>(rng.below(static_cast<std::uint64_t>(levels))));
    return v;
}

inline cbs::Matrix random_matrix(cbs::Rng& rng, std::size_t n, std::size_t m) {
    cbs::Matrix x(n, m);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < n; ++i) x.at(i, j) = rng.uniform(-1.0, 1.0);
    return x;
}

// Ordinary least squares on [1, X] via dense QR.
inline std::vector<double> ols_oracle(const cbs::Matrix& x, const std::vector<double>& y,
                                      bool intercept) {
    const std::size_t n = x.rows(), m = x.cols();
    const std::size_t cols = m + (intercept ? 1 : 0);
    Eigen::MatrixXd a(n, cols);
    std::size_t off = 0;
    if (intercept) {
        for (std::size_t i = 0; i < n; ++i) a(i, 0) = 1.0;
        off = 1;
    }
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < n; ++i) a(i, j + off) = x.at(i, j);
    Eigen::VectorXd yy(n);
    for (std::size_t i = 0; i < n; ++i) yy(i) = y[i];
    Eigen::VectorXd sol = a.colPivHouseholderQr().solve(yy);
    std::vector<double> out(sol.data(), sol.data() + sol.size());
    return out;  // [intercept,] coefficients...
}

// Unpenalized logistic MLE by straight Newton-Raphson with a dense solve.
inline std::vector<double> logistic_newton_oracle(const cbs::Matrix& x,
                                                  const std::vector<std::uint8_t>& d,
                                                  bool intercept, std::size_t iters = 60) {
    const std::size_t n = x.rows(), m = x.cols();
    const std::size_t cols = m + (intercept ? 1 : 0);
    Eigen::MatrixXd a(n, cols);
    std::size_t off = 0;
    if (intercept) {
        for (std::size_t i = 0; i < n; ++i) a(i, 0) = 1.0;
        off = 1;
    }
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < n; ++i) a(i, j + off) = x.at(i, j);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(cols);
    for (std::size_t it = 0; it < iters; ++it) {
        Eigen::VectorXd eta = a * beta;
        Eigen::VectorXd mu(n), w(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double e = 1.0 / (1.0 + std::exp(-eta(i)));
            mu(i) = e;
            w(i) = std::max(e * (1.0 - e), 1e-12);
        }
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(cols);
        for (std::size_t i = 0; i < n; ++i)
            grad += (static_cast<double>(d[i]) - mu(i)) * a.row(i).transpose();
        Eigen::MatrixXd hess = a.transpose() * w.asDiagonal() * a;
        Eigen::VectorXd step = hess.ldlt().solve(grad);
        beta += step;
        if (step.lpNorm<Eigen::Infinity>() < 1e-13) break;
    }
    return std::vector<double>(beta.data(), beta.data() + beta.size());
}

// Inverse normal CDF by bisection on the erfc-based CDF.
inline double normal_quantile_bisect(double p, double tol = 1e-12) {
    double lo = -40.0, hi = 40.0;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        const double c = 0.5 * std::erfc(-mid / std::sqrt(2.0));
        if (c < p) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace testutil
