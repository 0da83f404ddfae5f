#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "anchorseek/rng.hpp"
#include "anchorseek/sampled_matrix.hpp"
#include "anchorseek/types.hpp"

namespace anchorseek {

enum class SketchSide { RowSpace, ColumnSpace };

template <typename Scalar>
struct FkvOptions {
    /// c in p = q = ceil(c * ceil(k^4/eps^2) * ceil(ln(1/delta))); lowering it
    /// trades the guarantee constants for speed.
    Scalar sample_factor = Scalar(1);
    /// Numerical-zero threshold: drop sigma <= sigma_drop * sigma_max.
    Scalar sigma_drop = Scalar(1e-8);
    /// FKV significance filter: keep only sigma_l^2 >= (eps/k) * |W|_F^2.
    bool significance_filter = true;
    /// Cache dense columns, per-column samplers and exact norms.
    bool materialize = false;
    /// Candidate runs for the failure-probability boost; 0 = ceil(ln(1/delta)).
    Index repetitions = 0;
};

/**
 * Short description of approximate singular vectors a la FKV: sampled row
 * index set T, rescaling weights, the left singular vectors u of the
 * doubly-sampled small matrix W and its singular values. The implied
 * columns are
 *
 *     Vhat^(j)[s] = sum_t weights[t] * A(T_t, s) * u[t, j] / sigma_j ,
 *
 * queryable with p matrix reads and length-squared sampleable by rejection
 * over the rows of A_T. For ColumnSpace sketches every access runs through
 * the transposed view, so "rows" means columns of the source matrix.
 *
 * The description is immutable after construction and safe to share
 * between threads.
 */
template <typename Scalar>
struct SketchDescription {
    SketchSide side = SketchSide::RowSpace;
    std::vector<Index> sampled;    // T
    Vector<Scalar> weights;        // d_t (all ones on the exact path)
    Vector<Scalar> sampled_norms;  // |A_(T_t)| as read during sketching
    Matrix<Scalar> small_vectors;  // p x k'
    Vector<Scalar> sigma;          // k', descending

    Index rank_request = 0;
    Scalar epsilon = Scalar(0);
    Scalar delta = Scalar(0);
    Index p = 0, q = 0;
    bool exact_rows = false, exact_cols = false;
    Scalar source_frobenius_sq = Scalar(0);
    const SampledMatrix<Scalar>* source = nullptr;

    // Derived caches (built once, read-only afterwards).
    Matrix<Scalar> coeffs;                              // p x k': weights .* u / sigma
    std::vector<SampledVector<Scalar>> proposal_trees;  // per column, over t
    std::optional<Matrix<Scalar>> dense;                // materialized columns
    std::vector<SampledVector<Scalar>> dense_samplers;
    Vector<Scalar> dense_norms;

    MatrixAccess<Scalar> view() const {
        return MatrixAccess<Scalar>(*source, side == SketchSide::ColumnSpace);
    }
    /// Length of each implied column (n for RowSpace, m for ColumnSpace).
    Index dim() const { return view().cols(); }
    Index num_columns() const { return sigma.size(); }
    bool materialized() const { return dense.has_value(); }
    /// Orthonormality budget alpha = eps*k/16 guaranteed for this sketch.
    Scalar nominal_alpha() const { return epsilon * static_cast<Scalar>(rank_request) / Scalar(16); }
};

/// The sample factor c that makes p = c * ceil(k^4/eps^2) * ceil(ln 1/delta)
/// come out at `target` rows; benchmark paths use it to pin
/// dimension-independent sketch sizes at tolerances whose default p would
/// otherwise exceed every desk-scale matrix.
template <typename Scalar>
Scalar sample_factor_for_target(Index target, Index k, Scalar eps, Scalar delta) {
    const Scalar k4 = std::pow(static_cast<Scalar>(k), Scalar(4));
    const Scalar boost = std::max(Scalar(1), std::ceil(std::log(Scalar(1) / delta)));
    return static_cast<Scalar>(target) / (std::ceil(k4 / (eps * eps)) * boost);
}

/// Recompute the combination coefficients and per-column proposal trees
/// from the stored fields (after construction or deserialization).
template <typename Scalar>
void rebuild_description_caches(SketchDescription<Scalar>& d) {
    const Index kp = d.num_columns();
    d.coeffs.resize(d.p, kp);
    for (Index j = 0; j < kp; ++j)
        d.coeffs.col(j) = d.weights.cwiseProduct(d.small_vectors.col(j)) / d.sigma[j];
    d.proposal_trees.clear();
    d.proposal_trees.reserve(static_cast<std::size_t>(kp));
    for (Index j = 0; j < kp; ++j)
        d.proposal_trees.emplace_back(Vector<Scalar>(d.coeffs.col(j).cwiseProduct(d.sampled_norms)));
}

namespace detail {

template <typename Scalar>
struct FkvCandidate {
    std::vector<Index> sampled;
    Vector<Scalar> weights;
    Vector<Scalar> sampled_norms;
    Matrix<Scalar> small_vectors;
    Vector<Scalar> sigma;
    Scalar score = Scalar(0);  // captured spectral mass
};

template <typename Scalar>
FkvCandidate<Scalar> fkv_candidate(const MatrixAccess<Scalar>& view, Index k, Scalar eps,
                                   Index p, Index q, bool exact_rows, bool exact_cols,
                                   const FkvOptions<Scalar>& opts, Rng& rng) {
    const Scalar fro2 = view.frobenius_squared();
    const Scalar fro = std::sqrt(fro2);

    FkvCandidate<Scalar> cand;
    cand.sampled.resize(static_cast<std::size_t>(p));
    cand.weights.resize(p);
    cand.sampled_norms.resize(p);
    if (exact_rows) {
        for (Index t = 0; t < p; ++t) {
            cand.sampled[static_cast<std::size_t>(t)] = t;
            cand.weights[t] = Scalar(1);
            cand.sampled_norms[t] = view.row_norm(t);
        }
    } else {
        const Scalar inv_sqrt_p = Scalar(1) / std::sqrt(static_cast<Scalar>(p));
        for (Index t = 0; t < p; ++t) {
            const Index it = view.sample_row_index(rng);
            const Scalar norm = view.row_norm(it);
            cand.sampled[static_cast<std::size_t>(t)] = it;
            cand.sampled_norms[t] = norm;
            cand.weights[t] = fro * inv_sqrt_p / norm;
        }
    }

    // Column pass: reads the p x q submatrix once; the rescaled columns of
    // W are computed from those same reads.
    Matrix<Scalar> w(p, q);
    if (exact_cols) {
        for (Index c = 0; c < q; ++c)
            for (Index t = 0; t < p; ++t)
                w(t, c) = cand.weights[t] * view.entry(cand.sampled[static_cast<std::size_t>(t)], c);
    } else {
        // t drawn proportionally to the rescaled row norms (uniform when the
        // rows were importance-sampled, length-squared when they are exact),
        // then a column index within that row: the marginal is exactly the
        // column length-squared distribution of the rescaled row matrix.
        const SampledVector<Scalar> row_picker(
            Vector<Scalar>(cand.weights.cwiseProduct(cand.sampled_norms)));
        const Scalar inv_sqrt_q = Scalar(1) / std::sqrt(static_cast<Scalar>(q));
        for (Index c = 0; c < q; ++c) {
            const Index row_of = cand.sampled[static_cast<std::size_t>(row_picker.sample(rng))];
            const Index jc = view.sample_in_row(row_of, rng);
            for (Index t = 0; t < p; ++t)
                w(t, c) = cand.weights[t] * view.entry(cand.sampled[static_cast<std::size_t>(t)], jc);
            const Scalar col_norm = w.col(c).norm();
            // col_norm > 0: the sampled column contains the sampled entry.
            w.col(c) *= fro * inv_sqrt_q / col_norm;
        }
    }

    const Scalar w_fro2 = w.squaredNorm();
    Eigen::BDCSVD<Matrix<Scalar>> svd(w, Eigen::ComputeThinU);
    const Vector<Scalar> sv = svd.singularValues();

    Index kept = 0;
    while (kept < std::min<Index>(k, sv.size())) {
        const Scalar s = sv[kept];
        if (!(s > opts.sigma_drop * sv[0])) break;
        if (opts.significance_filter && !(s * s >= (eps / static_cast<Scalar>(k)) * w_fro2)) break;
        ++kept;
    }
    if (kept == 0) kept = 1;  // always expose the dominant direction

    cand.small_vectors = svd.matrixU().leftCols(kept);
    cand.sigma = sv.head(kept);
    cand.score = cand.sigma.squaredNorm();
    return cand;
}

template <typename Scalar>
SketchDescription<Scalar> fkv_sketch_impl(const SampledMatrix<Scalar>& a, SketchSide side, Index k,
                                          Scalar eps, Scalar delta, Rng& rng,
                                          const FkvOptions<Scalar>& opts) {
    const MatrixAccess<Scalar> view(a, side == SketchSide::ColumnSpace);
    const Index m = view.rows();
    const Index n = view.cols();
    if (k < 1 || k > std::min(m, n)) throw std::invalid_argument("fkv_sketch: rank out of range");
    if (!(eps > Scalar(0)) || !(eps < Scalar(1))) throw std::invalid_argument("fkv_sketch: eps must be in (0,1)");
    if (!(delta > Scalar(0)) || !(delta < Scalar(1)))
        throw std::invalid_argument("fkv_sketch: delta must be in (0,1)");
    const Scalar fro2 = view.frobenius_squared();
    if (!(fro2 > Scalar(0))) throw std::domain_error("fkv_sketch: zero matrix");

    const Scalar k4 = std::pow(static_cast<Scalar>(k), Scalar(4));
    const Scalar log_boost = std::ceil(std::log(Scalar(1) / delta));
    const Scalar raw = opts.sample_factor * std::ceil(k4 / (eps * eps)) * std::max(Scalar(1), log_boost);
    const Index target = static_cast<Index>(std::min<Scalar>(raw, Scalar(Index(1) << 30)));
    Index p = std::max<Index>(Index(1), target);
    Index q = p;
    const bool exact_rows = p >= m;
    const bool exact_cols = q >= n;
    if (exact_rows) p = m;
    if (exact_cols) q = n;

    Index reps = opts.repetitions > 0 ? opts.repetitions
                                      : static_cast<Index>(std::max(Scalar(1), log_boost));
    if (exact_rows && exact_cols) reps = 1;  // candidate is deterministic

    detail::FkvCandidate<Scalar> best;
    for (Index r = 0; r < reps; ++r) {
        auto cand = detail::fkv_candidate(view, k, eps, p, q, exact_rows, exact_cols, opts, rng);
        if (r == 0 || cand.score > best.score) best = std::move(cand);
    }

    SketchDescription<Scalar> d;
    d.side = side;
    d.sampled = std::move(best.sampled);
    d.weights = std::move(best.weights);
    d.sampled_norms = std::move(best.sampled_norms);
    d.small_vectors = std::move(best.small_vectors);
    d.sigma = std::move(best.sigma);
    d.rank_request = k;
    d.epsilon = eps;
    d.delta = delta;
    d.p = p;
    d.q = q;
    d.exact_rows = exact_rows;
    d.exact_cols = exact_cols;
    d.source_frobenius_sq = fro2;
    d.source = &a;

    rebuild_description_caches(d);
    if (opts.materialize) materialize(d);
    return d;
}

}  // namespace detail

/// FKV sketch of the row space: description of approximate right singular
/// vectors, built from length-squared row and column samples only.
template <typename Scalar>
SketchDescription<Scalar> fkv_sketch(const SampledMatrix<Scalar>& a, Index k, Scalar eps,
                                     Scalar delta, Rng& rng, const FkvOptions<Scalar>& opts = {}) {
    return detail::fkv_sketch_impl(a, SketchSide::RowSpace, k, eps, delta, rng, opts);
}

/// FKV sketch of the column space (approximate left singular vectors):
/// the same algorithm applied to the transposed view.
template <typename Scalar>
SketchDescription<Scalar> fkv_sketch_left(const SampledMatrix<Scalar>& a, Index k, Scalar eps,
                                          Scalar delta, Rng& rng, const FkvOptions<Scalar>& opts = {}) {
    return detail::fkv_sketch_impl(a, SketchSide::ColumnSpace, k, eps, delta, rng, opts);
}

/// Vhat_{coord, j}, reconstructed from p matrix entries (O(1) when the
/// sketch is materialized).
template <typename Scalar>
Scalar sketch_query_entry(const SketchDescription<Scalar>& d, Index coord, Index j) {
    if (j < 0 || j >= d.num_columns()) throw std::out_of_range("sketch_query_entry: column out of range");
    if (coord < 0 || coord >= d.dim()) throw std::out_of_range("sketch_query_entry: coordinate out of range");
    if (d.dense) return (*d.dense)(coord, j);
    const auto view = d.view();
    Scalar acc = Scalar(0);
    for (Index t = 0; t < d.p; ++t)
        acc += d.coeffs(t, j) * view.entry(d.sampled[static_cast<std::size_t>(t)], coord);
    return acc;
}

/**
 * Draw an index from D_{Vhat^(j)} by rejection over the rows of A_T:
 * propose t with probability proportional to (coeff_t |A_(T_t)|)^2, draw s
 * from the t-th sampled row, accept with
 * Vhat_{s,j}^2 / (p * sum_t (coeff_t A(T_t, s))^2).
 */
template <typename Scalar>
Index sketch_sample_column(const SketchDescription<Scalar>& d, Index j, Rng& rng) {
    if (j < 0 || j >= d.num_columns()) throw std::out_of_range("sketch_sample_column: column out of range");
    if (!(d.sigma[j] > Scalar(0))) throw std::domain_error("sketch_sample_column: degenerate column");
    if (d.dense) return d.dense_samplers[static_cast<std::size_t>(j)].sample(rng);

    const auto view = d.view();
    const auto& proposal = d.proposal_trees[static_cast<std::size_t>(j)];
    const Scalar pf = static_cast<Scalar>(d.p);
    const std::uint64_t budget =
        64 + 64 * static_cast<std::uint64_t>(std::ceil(d.source_frobenius_sq / (d.sigma[j] * d.sigma[j])));
    for (std::uint64_t iter = 0; iter < budget; ++iter) {
        const Index t = proposal.sample(rng);
        const Index s = view.sample_in_row(d.sampled[static_cast<std::size_t>(t)], rng);
        Scalar value = Scalar(0), denom = Scalar(0);
        for (Index tt = 0; tt < d.p; ++tt) {
            const Scalar term = d.coeffs(tt, j) * view.entry(d.sampled[static_cast<std::size_t>(tt)], s);
            value += term;
            denom += term * term;
        }
        if (!(denom > Scalar(0))) continue;
        const Scalar r = value * value / (pf * denom);
        if (uniform_unit(rng) < static_cast<double>(r)) return s;
    }
    throw std::runtime_error("sketch_sample_column: rejection budget exhausted");
}

/// Unbiased estimate of |Vhat^(j)|^2 from `samples` proposal draws.
template <typename Scalar>
Scalar sketch_column_norm_squared_estimate(const SketchDescription<Scalar>& d, Index j,
                                           Index samples, Rng& rng) {
    if (j < 0 || j >= d.num_columns()) throw std::out_of_range("sketch column out of range");
    if (d.dense) return d.dense_norms[j] * d.dense_norms[j];
    const auto view = d.view();
    const auto& proposal = d.proposal_trees[static_cast<std::size_t>(j)];
    const Scalar z = proposal.squared_norm();
    Scalar acc = Scalar(0);
    for (Index it = 0; it < samples; ++it) {
        const Index t = proposal.sample(rng);
        const Index s = view.sample_in_row(d.sampled[static_cast<std::size_t>(t)], rng);
        Scalar value = Scalar(0), denom = Scalar(0);
        for (Index tt = 0; tt < d.p; ++tt) {
            const Scalar term = d.coeffs(tt, j) * view.entry(d.sampled[static_cast<std::size_t>(tt)], s);
            value += term;
            denom += term * term;
        }
        if (denom > Scalar(0)) acc += value * value * z / denom;
    }
    return acc / static_cast<Scalar>(samples);
}

/// Dense n x k' matrix of the implied columns (test/desk-scale path).
template <typename Scalar>
Matrix<Scalar> materialize_dense(const SketchDescription<Scalar>& d) {
    if (d.dense) return *d.dense;
    const auto view = d.view();
    Matrix<Scalar> rows_t(d.p, d.dim());
    for (Index t = 0; t < d.p; ++t)
        for (Index c = 0; c < d.dim(); ++c)
            rows_t(t, c) = view.entry(d.sampled[static_cast<std::size_t>(t)], c);
    return rows_t.transpose() * d.coeffs;
}

/// Fill the dense caches: O(1) queries, tree-based column sampling, exact
/// column norms.
template <typename Scalar>
void materialize(SketchDescription<Scalar>& d) {
    if (d.dense) return;
    d.dense = materialize_dense(d);
    const Index kp = d.num_columns();
    d.dense_samplers.clear();
    d.dense_samplers.reserve(static_cast<std::size_t>(kp));
    d.dense_norms.resize(kp);
    for (Index j = 0; j < kp; ++j) {
        d.dense_samplers.emplace_back(Vector<Scalar>(d.dense->col(j)));
        d.dense_norms[j] = d.dense->col(j).norm();
    }
}

template <typename Scalar>
struct AlphaOrthoCertificate {
    Scalar alpha = Scalar(0);
    Scalar max_diag_deviation = Scalar(0);  // max_j | |Vhat^(j)|^2 - 1 |
    Scalar max_off_diagonal = Scalar(0);    // max_{s != t} |Vhat^(s) . Vhat^(t)|
    Index columns = 0;

    bool passes() const { return passes_at(alpha); }
    bool passes_at(Scalar a) const {
        const Scalar budget = a / static_cast<Scalar>(std::max<Index>(columns, 1));
        return max_diag_deviation <= budget && max_off_diagonal <= budget;
    }
};

/// Certificate over explicit columns.
template <typename Scalar>
AlphaOrthoCertificate<Scalar> verify_alpha_ortho(const Matrix<Scalar>& columns, Scalar alpha) {
    AlphaOrthoCertificate<Scalar> cert;
    cert.alpha = alpha;
    cert.columns = columns.cols();
    const Matrix<Scalar> gram = columns.transpose() * columns;
    for (Index i = 0; i < gram.rows(); ++i)
        for (Index j = 0; j < gram.cols(); ++j) {
            if (i == j) cert.max_diag_deviation = std::max(cert.max_diag_deviation, std::abs(gram(i, j) - Scalar(1)));
            else cert.max_off_diagonal = std::max(cert.max_off_diagonal, std::abs(gram(i, j)));
        }
    return cert;
}

/// Certificate for a sketch at its guaranteed budget alpha = eps*k/16
/// (dense, test-only path).
template <typename Scalar>
AlphaOrthoCertificate<Scalar> verify_alpha_ortho(const SketchDescription<Scalar>& d) {
    return verify_alpha_ortho<Scalar>(materialize_dense(d), d.nominal_alpha());
}

/**
 * True iff every row of A (column for ColumnSpace sketches) lies in
 * span(Vhat) within `tol` relative residual. Dense, test-scale only.
 */
template <typename Scalar>
bool span_check(const SketchDescription<Scalar>& d, const SampledMatrix<Scalar>& a,
                Scalar tol = Scalar(1e-6)) {
    Matrix<Scalar> vhat = materialize_dense(d);
    const Eigen::HouseholderQR<Matrix<Scalar>> qr(vhat);
    const Matrix<Scalar> qfull = qr.householderQ() * Matrix<Scalar>::Identity(vhat.rows(), vhat.cols());
    Matrix<Scalar> dense = a.to_dense();
    if (d.side == SketchSide::ColumnSpace) dense.transposeInPlace();
    for (Index i = 0; i < dense.rows(); ++i) {
        const Vector<Scalar> row = dense.row(i).transpose();
        const Scalar norm = row.norm();
        if (!(norm > Scalar(0))) continue;
        const Vector<Scalar> residual = row - qfull * (qfull.transpose() * row);
        if (residual.norm() > tol * norm) return false;
    }
    return true;
}

}  // namespace anchorseek
