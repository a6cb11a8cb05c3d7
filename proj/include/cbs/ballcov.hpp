#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cbs/common.hpp"

namespace cbs {

/// Closed-ball membership: 1 iff |x_k - x_i| <= |x_j - x_i|. Ties (the
/// boundary point and duplicates of it) are inside the ball.
inline int delta_indicator(const Sample& x, std::size_t i, std::size_t j, std::size_t k) {
    const std::size_t n = x.size();
    if (i >= n || j >= n || k >= n) throw std::out_of_range("delta_indicator: index out of range");
    return std::fabs(x[k] - x[i]) <= std::fabs(x[j] - x[i]) ? 1 : 0;
}

namespace detail {

// One anchor's view of the other points, ordered by distance from the
// anchor with ties grouped by exact value equality:
//   pos[k]  : 1-based insertion position of point k in that order
//   rank[k] : number of points at distance <= distance(k)  (inclusive)
// Built by merging the two runs of the globally sorted values around the
// anchor, so no per-anchor sort is needed.
inline void distance_order(std::span<const double> sorted_vals,
                           std::span<const std::int32_t> sorted_idx,
                           std::int32_t anchor_pos,
                           std::int32_t* pos, std::int32_t* rank) {
    const std::int32_t n = static_cast<std::int32_t>(sorted_vals.size());
    const double c = sorted_vals[anchor_pos];
    std::int32_t l = anchor_pos, r = anchor_pos + 1;
    std::int32_t placed = 0;
    while (l >= 0 || r < n) {
        const double dl = (l >= 0) ? c - sorted_vals[l] : std::numeric_limits<double>::infinity();
        const double dr = (r < n) ? sorted_vals[r] - c : std::numeric_limits<double>::infinity();
        const double d = dl < dr ? dl : dr;
        // consume the whole tie group at distance d from both sides
        while (l >= 0 && c - sorted_vals[l] == d) {
            pos[sorted_idx[l]] = ++placed;
            --l;
        }
        while (r < n && sorted_vals[r] - c == d) {
            pos[sorted_idx[r]] = ++placed;
            ++r;
        }
        // inclusive rank is the cumulative count through the group; fill
        // after the group is complete
        const std::int32_t upto = placed;
        std::int32_t li = l + 1, ri = r - 1;
        while (li <= anchor_pos && c - sorted_vals[li] == d) { rank[sorted_idx[li]] = upto; ++li; }
        while (ri > anchor_pos && sorted_vals[ri] - c == d) { rank[sorted_idx[ri]] = upto; --ri; }
    }
}

struct Fenwick {
    std::vector<std::int32_t> tree;
    void reset(std::size_t n) { tree.assign(n + 1, 0); }
    void clear() { std::fill(tree.begin(), tree.end(), 0); }
    void add(std::int32_t i) {
        for (; i < static_cast<std::int32_t>(tree.size()); i += i & (-i)) tree[i] += 1;
    }
    std::int32_t prefix(std::int32_t i) const {
        std::int32_t s = 0;
        for (; i > 0; i -= i & (-i)) s += tree[i];
        return s;
    }
};

// Per-arm structures for the y side of the conditional statistic, shared
// across all screened columns: one (pos, rank) row per anchor.
struct YSideCache {
    std::size_t n = 0;
    std::vector<std::int32_t> pos;   // n*n, row per anchor
    std::vector<std::int32_t> rank;  // n*n, row per anchor
    bool constant = false;

    void build(std::span<const double> y) {
        n = y.size();
        constant = true;
        for (std::size_t k = 1; k < n; ++k) {
            if (y[k] != y[0]) { constant = false; break; }
        }
        if (constant) return;
        pos.resize(n * n);
        rank.resize(n * n);
        std::vector<std::int32_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](std::int32_t a, std::int32_t b) { return y[a] < y[b]; });
        std::vector<double> sorted(n);
        std::vector<std::int32_t> pos_in_sort(n);
        for (std::size_t s = 0; s < n; ++s) {
            sorted[s] = y[order[s]];
            pos_in_sort[order[s]] = static_cast<std::int32_t>(s);
        }
        for (std::size_t i = 0; i < n; ++i) {
            distance_order(sorted, order, pos_in_sort[i], pos.data() + i * n,
                           rank.data() + i * n);
        }
    }
};

struct BcovWorkspace {
    std::vector<std::int32_t> x_order;
    std::vector<double> x_sorted;
    std::vector<std::int32_t> x_pos_in_sort;
    std::vector<std::int32_t> group;
    Fenwick fenwick;
    YSideCache y_local;  // used by the pair (non-cached) entry point

    void prepare_x(std::span<const double> x) {
        const std::size_t n = x.size();
        x_order.resize(n);
        x_sorted.resize(n);
        x_pos_in_sort.resize(n);
        group.clear();
        std::iota(x_order.begin(), x_order.end(), 0);
        std::sort(x_order.begin(), x_order.end(),
                  [&](std::int32_t a, std::int32_t b) { return x[a] < x[b]; });
        for (std::size_t s = 0; s < n; ++s) {
            x_sorted[s] = x[x_order[s]];
            x_pos_in_sort[x_order[s]] = static_cast<std::int32_t>(s);
        }
    }
};

// Sum over all ordered pairs (i,j) of (n*Cxy - Cx*Cy)^2 where
//   Cx  = #{k : |x_k-x_i| <= |x_j-x_i|}
//   Cy  = #{k : |y_k-y_i| <= |y_j-y_i|}
//   Cxy = #{k : both}
// which equals n^6 * BCov^2_n(x, y); counts stay in integers.
inline unsigned __int128 bcov_pair_sum(std::span<const double> x, const YSideCache& yc,
                                       BcovWorkspace& ws) {
    const std::size_t n = x.size();
    bool x_constant = true;
    for (std::size_t k = 1; k < n; ++k) {
        if (x[k] != x[0]) { x_constant = false; break; }
    }
    if (x_constant || yc.constant) return 0;  // every xi (or eta) term vanishes

    ws.prepare_x(x);
    ws.fenwick.reset(n);
    unsigned __int128 acc = 0;
    const std::int64_t nn = static_cast<std::int64_t>(n);

    for (std::size_t i = 0; i < n; ++i) {
        const std::int32_t* ypos = yc.pos.data() + i * n;
        const std::int32_t* yrank = yc.rank.data() + i * n;
        const double c = ws.x_sorted[ws.x_pos_in_sort[i]];
        std::int32_t l = ws.x_pos_in_sort[i], r = l + 1;
        std::int64_t m = 0;
        while (l >= 0 || r < static_cast<std::int32_t>(n)) {
            const double dl =
                (l >= 0) ? c - ws.x_sorted[l] : std::numeric_limits<double>::infinity();
            const double dr = (r < static_cast<std::int32_t>(n))
                                  ? ws.x_sorted[r] - c
                                  : std::numeric_limits<double>::infinity();
            const double d = dl < dr ? dl : dr;
            ws.group.clear();
            while (l >= 0 && c - ws.x_sorted[l] == d) {
                ws.group.push_back(ws.x_order[l]);
                --l;
            }
            while (r < static_cast<std::int32_t>(n) && ws.x_sorted[r] - c == d) {
                ws.group.push_back(ws.x_order[r]);
                ++r;
            }
            for (std::int32_t k : ws.group) ws.fenwick.add(ypos[k]);
            m += static_cast<std::int64_t>(ws.group.size());
            for (std::int32_t j : ws.group) {
                const std::int64_t cy = yrank[j];
                const std::int64_t cxy = ws.fenwick.prefix(yrank[j]);
                const std::int64_t t = nn * cxy - m * cy;
                acc += static_cast<unsigned __int128>(static_cast<__int128>(t) * t);
            }
        }
        ws.fenwick.clear();
    }
    return acc;
}

inline double int128_to_double(unsigned __int128 v) {
    return static_cast<double>(static_cast<std::uint64_t>(v >> 64)) * 0x1.0p64 +
           static_cast<double>(static_cast<std::uint64_t>(v));
}

inline double bcov_sq_fast_span(std::span<const double> x, std::span<const double> y,
                                BcovWorkspace& ws) {
    const std::size_t n = x.size();
    ws.y_local.build(y);
    const unsigned __int128 acc = bcov_pair_sum(x, ws.y_local, ws);
    const double dn = static_cast<double>(n);
    const double n2 = dn * dn;
    return int128_to_double(acc) / (n2 * n2 * n2);
}

}  // namespace detail

/// Literal six-index evaluation of the empirical squared ball covariance.
/// Exponential cost guard: n <= 12. Kept as the independent oracle route;
/// all arithmetic on 4*xi^X*xi^Y stays in integers.
inline double bcov_sq_definitional(const Sample& x, const Sample& y) {
    const std::size_t n = x.size();
    if (n != y.size()) throw invalid_input("bcov_sq_definitional: length mismatch");
    if (n < 2) throw invalid_input("bcov_sq_definitional: need n >= 2");
    if (n > 12) throw invalid_input("bcov_sq_definitional: n > 12 exceeds oracle guard");

    std::vector<int> ax(n), ay(n);
    std::int64_t total4 = 0;  // sum of 4 * xi^X * xi^Y
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double rx = std::fabs(x[j] - x[i]);
            const double ry = std::fabs(y[j] - y[i]);
            for (std::size_t k = 0; k < n; ++k) {
                ax[k] = std::fabs(x[k] - x[i]) <= rx ? 1 : 0;
                ay[k] = std::fabs(y[k] - y[i]) <= ry ? 1 : 0;
            }
            for (std::size_t k = 0; k < n; ++k)
                for (std::size_t l = 0; l < n; ++l)
                    for (std::size_t s = 0; s < n; ++s)
                        for (std::size_t t = 0; t < n; ++t) {
                            const int xi2 = ax[k] * ax[l] + ax[s] * ax[t] -
                                            ax[k] * ax[s] - ax[l] * ax[t];
                            const int eta2 = ay[k] * ay[l] + ay[s] * ay[t] -
                                             ay[k] * ay[s] - ay[l] * ay[t];
                            total4 += xi2 * eta2;
                        }
        }
    }
    const double dn = static_cast<double>(n);
    const double n2 = dn * dn;
    return static_cast<double>(total4) / (4.0 * n2 * n2 * n2);
}

/// Squared ball covariance via the pairwise reformulation
///   BCov^2_n = (1/n^2) sum_{i,j} (Dxy_ij - Dx_ij * Dy_ij)^2,
/// computed with per-anchor sorted-distance merges and a Fenwick tree;
/// O(n^2 log n). Agrees with the definitional sum exactly (both reduce to
/// the same integer counts).
inline double bcov_sq_fast(const Sample& x, const Sample& y) {
    if (x.size() != y.size()) throw invalid_input("bcov_sq_fast: length mismatch");
    if (x.size() < 2) throw invalid_input("bcov_sq_fast: need n >= 2");
    detail::BcovWorkspace ws;
    return detail::bcov_sq_fast_span(x.values(), y.values(), ws);
}

struct CondBcov {
    double value = 0.0;
    double arm1 = 0.0;
    double arm0 = 0.0;
    double omega_hat = 0.0;
};

namespace detail {

inline void split_by_arm(std::span<const std::uint8_t> d, std::vector<std::size_t>& idx1,
                         std::vector<std::size_t>& idx0) {
    idx1.clear();
    idx0.clear();
    for (std::size_t i = 0; i < d.size(); ++i) {
        (d[i] == 1 ? idx1 : idx0).push_back(i);
    }
}

inline void gather(std::span<const double> v, const std::vector<std::size_t>& idx,
                   std::vector<double>& out) {
    out.resize(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) out[r] = v[idx[r]];
}

}  // namespace detail

/// Empirical conditional ball covariance: the treatment-share weighted
/// combination of the within-arm statistics. Each arm needs >= 2 units.
inline CondBcov cond_bcov_decomposed(const Sample& x, const Sample& y, const ArmLabels& d) {
    const std::size_t n = x.size();
    if (n != y.size() || n != d.size())
        throw invalid_input("cond_bcov_sq: length mismatch");
    if (d.n1() < 2 || d.n0() < 2)
        throw degenerate_data("cond_bcov_sq: each treatment arm needs >= 2 units (n1=" +
                              std::to_string(d.n1()) + ", n0=" + std::to_string(d.n0()) + ")");
    std::vector<std::size_t> idx1, idx0;
    detail::split_by_arm(d.values(), idx1, idx0);
    std::vector<double> x1, y1, x0, y0;
    detail::gather(x.values(), idx1, x1);
    detail::gather(y.values(), idx1, y1);
    detail::gather(x.values(), idx0, x0);
    detail::gather(y.values(), idx0, y0);
    detail::BcovWorkspace ws;
    CondBcov out;
    out.omega_hat = d.omega_hat();
    out.arm1 = detail::bcov_sq_fast_span(x1, y1, ws);
    out.arm0 = detail::bcov_sq_fast_span(x0, y0, ws);
    out.value = out.omega_hat * out.arm1 + (1.0 - out.omega_hat) * out.arm0;
    return out;
}

inline double cond_bcov_sq(const Sample& x, const Sample& y, const ArmLabels& d) {
    return cond_bcov_decomposed(x, y, d).value;
}

}  // namespace cbs
