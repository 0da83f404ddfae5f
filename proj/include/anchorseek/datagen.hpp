#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "anchorseek/baselines.hpp"
#include "anchorseek/rng.hpp"
#include "anchorseek/types.hpp"

namespace anchorseek {

/**
 * Synthetic separable instance: A = F * A_R with known anchor rows.
 * Rows of A are l1-normalized, F is row-stochastic, the rows of F indexed
 * by `anchors` are one-hot, and every non-anchor row of F has all entries
 * <= 1 - margin.
 */
template <typename Scalar>
struct SeparableInstance {
    Matrix<Scalar> a;            // m x n
    Matrix<Scalar> mixing;       // F, m x k
    std::vector<Index> anchors;  // sorted, |anchors| = k
    Index k = 0, m = 0, n = 0;
    Scalar margin = Scalar(0);
    Scalar kappa_target = Scalar(1);
    Scalar kappa_achieved = Scalar(1);
    bool kappa_target_met = true;
    std::uint64_t seed = 0;
};

namespace detail {

template <typename Scalar>
Vector<Scalar> dirichlet_flat(Index n, Rng& rng) {
    Vector<Scalar> x(n);
    for (Index i = 0; i < n; ++i) {
        double u = uniform_unit(rng);
        while (u <= 0.0) u = uniform_unit(rng);
        x[i] = static_cast<Scalar>(-std::log(u));
    }
    return x / x.sum();
}

// Nonzero spectrum of A = F * B through the k x k core: the nonzero
// eigenvalues of A^T A equal those of G_F^{1/2} (B B^T) G_F^{1/2} with
// G_F = F^T F.
template <typename Scalar>
Scalar rank_k_condition(const Matrix<Scalar>& gf_sqrt, const Matrix<Scalar>& b) {
    const Matrix<Scalar> core = gf_sqrt * (b * b.transpose()) * gf_sqrt;
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(core);
    const Vector<Scalar> ev = eig.eigenvalues();  // ascending
    const Scalar largest = ev[ev.size() - 1];
    if (!(largest > Scalar(0))) return std::numeric_limits<Scalar>::infinity();
    Scalar smallest = largest;
    for (Index i = 0; i < ev.size(); ++i)
        if (ev[i] > Scalar(1e-24) * largest) {
            smallest = ev[i];
            break;
        }
    return std::sqrt(largest / smallest);
}

}  // namespace detail

/**
 * Generate a separable instance with k anchors at uniformly random
 * positions. Anchor rows are flat-Dirichlet points in the simplex; the
 * condition number is shaped by mixing the anchor rows toward their mean
 * (bisection on the mixing amount). If kappa_target is below what the raw
 * draw achieves, the instance is returned best-effort with
 * kappa_target_met = false.
 */
template <typename Scalar = double>
SeparableInstance<Scalar> generate(Index k, Index m, Index n, Scalar kappa_target, Scalar margin,
                                   std::uint64_t seed) {
    if (k < 1 || m < k || n < k) throw std::invalid_argument("generate: need 1 <= k <= min(m, n)");
    if (!(margin > Scalar(0)) || !(margin < Scalar(1)))
        throw std::invalid_argument("generate: margin must be in (0, 1)");
    if (!(kappa_target >= Scalar(1))) throw std::invalid_argument("generate: kappa_target must be >= 1");
    if (k >= 2 && Scalar(1) / Scalar(k) > Scalar(1) - margin)
        throw std::invalid_argument("generate: margin infeasible for this k");

    Rng rng = derive_rng(seed, 0xDA7A6E11ull);

    // Anchor positions: random k-subset of [m].
    std::vector<Index> all(static_cast<std::size_t>(m));
    std::iota(all.begin(), all.end(), Index(0));
    for (Index i = 0; i < k; ++i) {
        const Index j = i + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(m - i)));
        std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
    }
    std::vector<Index> anchors(all.begin(), all.begin() + k);
    std::sort(anchors.begin(), anchors.end());

    // Anchor rows (k x n), each on the simplex.
    Matrix<Scalar> anchor_rows(k, n);
    for (Index r = 0; r < k; ++r) anchor_rows.row(r) = detail::dirichlet_flat<Scalar>(n, rng).transpose();

    // Mixing matrix F: one-hot at anchors, interior Dirichlet rows with
    // max entry <= 1 - margin elsewhere.
    Matrix<Scalar> f = Matrix<Scalar>::Zero(m, k);
    std::vector<bool> is_anchor(static_cast<std::size_t>(m), false);
    for (Index r = 0; r < k; ++r) is_anchor[static_cast<std::size_t>(anchors[static_cast<std::size_t>(r)])] = true;
    Index next_anchor_col = 0;
    for (Index i = 0; i < m; ++i) {
        if (is_anchor[static_cast<std::size_t>(i)]) {
            f(i, next_anchor_col++) = Scalar(1);
            continue;
        }
        if (k == 1) {
            f(i, 0) = Scalar(1);  // degenerate: every row equals the single anchor
            continue;
        }
        Vector<Scalar> row = detail::dirichlet_flat<Scalar>(k, rng);
        int tries = 0;
        while (row.maxCoeff() > Scalar(1) - margin && tries++ < 256)
            row = detail::dirichlet_flat<Scalar>(k, rng);
        while (row.maxCoeff() > Scalar(1) - margin) {
            row = Scalar(0.9) * row + Scalar(0.1) * Vector<Scalar>::Constant(k, Scalar(1) / Scalar(k));
        }
        f.row(i) = row.transpose();
    }

    // Condition shaping: B(t) = (1 - t) * anchor_rows + t * (mean replicated).
    const Matrix<Scalar> gf = f.transpose() * f;
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> gf_eig(gf);
    const Matrix<Scalar> gf_sqrt = gf_eig.operatorSqrt();
    const Eigen::RowVector<Scalar, Eigen::Dynamic> mean_row = anchor_rows.colwise().mean();
    auto mixed = [&](Scalar t) {
        Matrix<Scalar> b = (Scalar(1) - t) * anchor_rows;
        b.rowwise() += t * mean_row;
        return b;
    };
    const Scalar kappa0 = detail::rank_k_condition(gf_sqrt, anchor_rows);
    Scalar t_used = Scalar(0);
    bool met = true;
    if (kappa_target <= kappa0) {
        met = kappa_target >= kappa0 * Scalar(0.999);
    } else {
        Scalar lo = Scalar(0), hi = Scalar(1) - Scalar(1e-6);
        if (detail::rank_k_condition(gf_sqrt, mixed(hi)) < kappa_target) {
            t_used = hi;
            met = false;
        } else {
            for (int iter = 0; iter < 80; ++iter) {
                const Scalar mid = (lo + hi) / Scalar(2);
                if (detail::rank_k_condition(gf_sqrt, mixed(mid)) < kappa_target) lo = mid;
                else hi = mid;
            }
            t_used = (lo + hi) / Scalar(2);
        }
    }
    const Matrix<Scalar> b = mixed(t_used);

    SeparableInstance<Scalar> inst;
    inst.a = f * b;
    inst.mixing = std::move(f);
    inst.anchors = std::move(anchors);
    inst.k = k;
    inst.m = m;
    inst.n = n;
    inst.margin = margin;
    inst.kappa_target = kappa_target;
    inst.kappa_achieved = detail::rank_k_condition(gf_sqrt, b);
    inst.kappa_target_met = met;
    inst.seed = seed;
    return inst;
}

}  // namespace anchorseek
