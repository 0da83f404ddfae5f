#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "anchorseek/fkv.hpp"
#include "anchorseek/rng.hpp"
#include "anchorseek/sampled_matrix.hpp"
#include "anchorseek/types.hpp"

namespace anchorseek {

template <typename T, typename Scalar>
concept EntryQueryable = requires(const T& t, Index i, Index j) {
    { t.rows() } -> std::convertible_to<Index>;
    { t.cols() } -> std::convertible_to<Index>;
    { t.entry(i, j) } -> std::convertible_to<Scalar>;
};

/// Query adapter over a dense Eigen matrix.
template <typename Scalar>
struct DenseQuery {
    const Matrix<Scalar>* mat;
    Index rows() const { return mat->rows(); }
    Index cols() const { return mat->cols(); }
    Scalar entry(Index i, Index j) const { return (*mat)(i, j); }
};

/// L = Uhat^T: row i of L is the i-th sketch column.
template <typename Scalar>
struct SketchTransposeQuery {
    const SketchDescription<Scalar>* sketch;
    Index rows() const { return sketch->num_columns(); }
    Index cols() const { return sketch->dim(); }
    Scalar entry(Index i, Index s) const { return sketch_query_entry(*sketch, s, i); }
};

/// R = Vhat: columns are the sketch columns.
template <typename Scalar>
struct SketchQuery {
    const SketchDescription<Scalar>* sketch;
    Index rows() const { return sketch->dim(); }
    Index cols() const { return sketch->num_columns(); }
    Scalar entry(Index t, Index j) const { return sketch_query_entry(*sketch, t, j); }
};

template <typename Scalar>
struct EstimateOptions {
    /// Group size is ceil(c_mean / zeta^2); the per-entry sample count
    /// invariant holds with this as the configured constant.
    Scalar c_mean = Scalar(4);
    /// Hard per-entry budget (0 = none). When it binds, the achieved
    /// precision degrades gracefully and `capped` is set on the result.
    std::uint64_t per_entry_cap = 0;
};

template <typename Scalar>
struct ProductEstimate {
    Matrix<Scalar> m_tilde;
    Scalar zeta = Scalar(0);
    Scalar eta = Scalar(0);
    Scalar eta_entry = Scalar(0);            // 1 - (1-eta)^(1/(k1 k2))
    std::uint64_t groups = 0;                // median-of-means groups
    std::uint64_t group_size = 0;
    std::uint64_t per_entry_samples = 0;     // groups * group_size
    bool capped = false;
};

/**
 * Estimate M = L A R entrywise by importance sampling: draw s from the
 * row-norm distribution of A, then t within row s, and average
 * L_{i,s} R_{t,j} |A|_F^2 / A_{s,t} (the single-draw estimator is exactly
 * unbiased); a median over ceil(ln(1/eta')) groups gives the per-entry
 * failure probability eta' = 1 - (1-eta)^(1/(k1 k2)).
 */
template <typename Scalar, EntryQueryable<Scalar> LQ, EntryQueryable<Scalar> RQ>
ProductEstimate<Scalar> estimate_product(const SampledMatrix<Scalar>& a, const LQ& l, const RQ& r,
                                         Scalar zeta, Scalar eta, Rng& rng,
                                         const EstimateOptions<Scalar>& opts = {}) {
    const Index k1 = l.rows();
    const Index k2 = r.cols();
    if (l.cols() != a.rows() || r.rows() != a.cols())
        throw std::invalid_argument("estimate_product: dimension mismatch");
    if (!(zeta > Scalar(0)) || !(zeta < Scalar(1)) || !(eta > Scalar(0)) || !(eta < Scalar(1)))
        throw std::invalid_argument("estimate_product: zeta and eta must be in (0,1)");
    const Scalar fro2 = a.frobenius_squared();
    if (!(fro2 > Scalar(0))) throw std::domain_error("estimate_product: zero matrix");

    ProductEstimate<Scalar> est;
    est.zeta = zeta;
    est.eta = eta;
    est.eta_entry = Scalar(1) - std::pow(Scalar(1) - eta, Scalar(1) / static_cast<Scalar>(k1 * k2));
    est.groups = static_cast<std::uint64_t>(
        std::max<Scalar>(Scalar(1), std::ceil(std::log(Scalar(1) / est.eta_entry))));
    est.group_size = static_cast<std::uint64_t>(
        std::max<Scalar>(Scalar(1), std::ceil(opts.c_mean / (zeta * zeta))));
    if (opts.per_entry_cap > 0 && est.groups * est.group_size > opts.per_entry_cap) {
        est.group_size = std::max<std::uint64_t>(1, opts.per_entry_cap / est.groups);
        est.capped = true;
    }
    est.per_entry_samples = est.groups * est.group_size;

    est.m_tilde.resize(k1, k2);
    std::vector<Scalar> group_means(static_cast<std::size_t>(est.groups));
    for (Index i = 0; i < k1; ++i) {
        for (Index j = 0; j < k2; ++j) {
            for (std::uint64_t g = 0; g < est.groups; ++g) {
                Scalar acc = Scalar(0);
                for (std::uint64_t s = 0; s < est.group_size; ++s) {
                    const Index row = a.sample_row_index(rng);
                    const Index col = a.sample_in_row(row, rng);
                    const Scalar av = a.entry(row, col);
                    const Scalar lv = l.entry(i, row);
                    const Scalar rv = r.entry(col, j);
                    if (!std::isfinite(static_cast<double>(lv)) || !std::isfinite(static_cast<double>(rv)))
                        throw std::invalid_argument("estimate_product: non-finite factor entry");
                    acc += lv * rv * fro2 / av;
                }
                group_means[static_cast<std::size_t>(g)] = acc / static_cast<Scalar>(est.group_size);
            }
            auto mid = group_means.begin() + static_cast<std::ptrdiff_t>(group_means.size() / 2);
            std::nth_element(group_means.begin(), mid, group_means.end());
            est.m_tilde(i, j) = *mid;
        }
    }
    return est;
}

template <typename T, typename Scalar>
concept SampleableColumns = requires(const T& t, Index s, Index j, Rng& rng) {
    { t.dim() } -> std::convertible_to<Index>;
    { t.num_columns() } -> std::convertible_to<Index>;
    { t.entry(s, j) } -> std::convertible_to<Scalar>;
    { t.column_norm(j) } -> std::convertible_to<Scalar>;
    { t.sample_column(j, rng) } -> std::convertible_to<Index>;
};

/// Columns of a dense matrix with exact norms and tree-backed sampling.
template <typename Scalar>
class DenseColumns {
public:
    explicit DenseColumns(Matrix<Scalar> columns) : mat_(std::move(columns)) {
        samplers_.reserve(static_cast<std::size_t>(mat_.cols()));
        for (Index j = 0; j < mat_.cols(); ++j) samplers_.emplace_back(Vector<Scalar>(mat_.col(j)));
    }
    Index dim() const { return mat_.rows(); }
    Index num_columns() const { return mat_.cols(); }
    Scalar entry(Index s, Index j) const { return mat_(s, j); }
    Scalar column_norm(Index j) const { return mat_.col(j).norm(); }
    Index sample_column(Index j, Rng& rng) const { return samplers_[static_cast<std::size_t>(j)].sample(rng); }
    const Matrix<Scalar>& matrix() const { return mat_; }

private:
    Matrix<Scalar> mat_;
    std::vector<SampledVector<Scalar>> samplers_;
};

/**
 * Columns of an FKV sketch. When the sketch is materialized, norms are
 * exact and sampling goes through the cached trees; otherwise norms come
 * from a one-time sampling estimate and each draw runs the description's
 * rejection loop.
 */
template <typename Scalar>
class SketchColumns {
public:
    explicit SketchColumns(const SketchDescription<Scalar>& d, Index norm_estimate_samples = 4096,
                           std::uint64_t norm_seed = 0x6e6f726dull)
        : d_(&d) {
        norms_.resize(d.num_columns());
        if (d.materialized()) {
            norms_ = d.dense_norms;
        } else {
            Rng rng = derive_rng(norm_seed, 0x636f6c6eull);
            for (Index j = 0; j < d.num_columns(); ++j)
                norms_[j] = std::sqrt(sketch_column_norm_squared_estimate(*d_, j, norm_estimate_samples, rng));
        }
    }
    Index dim() const { return d_->dim(); }
    Index num_columns() const { return d_->num_columns(); }
    Scalar entry(Index s, Index j) const { return sketch_query_entry(*d_, s, j); }
    Scalar column_norm(Index j) const { return norms_[j]; }
    Index sample_column(Index j, Rng& rng) const { return sketch_sample_column(*d_, j, rng); }
    const SketchDescription<Scalar>& sketch() const { return *d_; }

private:
    const SketchDescription<Scalar>* d_;
    Vector<Scalar> norms_;
};

struct RejectionSampleStats {
    std::uint64_t proposed = 0;
    std::uint64_t accepted = 0;
    std::uint64_t budget = 0;
    double gamma = 0;
    double acceptance_rate() const { return proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0; }
};

/**
 * Draw one index from (approximately) D_{Vhat w} for alpha-approximately
 * orthonormal columns: propose column j from the length-squared
 * distribution of (w_j |Vhat^(j)|)_j, draw s from column j, accept with
 *
 *     r_s = (Vhat w)_s^2 / (k * sum_i (w_i Vhat_{s,i})^2)
 *
 * (r_s <= 1 by Cauchy-Schwarz). Aborts after 64 k^2 log(1/gamma) proposals,
 * which signals that the orthonormality premise is likely violated.
 */
template <typename Scalar, SampleableColumns<Scalar> Cols>
Index rejection_sample(const Cols& cols, const Vector<Scalar>& w, Scalar gamma, Rng& rng,
                       RejectionSampleStats* stats = nullptr) {
    const Index k = cols.num_columns();
    if (w.size() != k) throw std::invalid_argument("rejection_sample: weight length mismatch");
    if (!(w.norm() > Scalar(0))) throw std::invalid_argument("rejection_sample: w must be nonzero");
    if (!(gamma > Scalar(0)) || !(gamma < Scalar(1)))
        throw std::invalid_argument("rejection_sample: gamma must be in (0,1)");
    Vector<Scalar> proposal_weights(k);
    for (Index j = 0; j < k; ++j) proposal_weights[j] = w[j] * cols.column_norm(j);
    const SampledVector<Scalar> proposal(proposal_weights);

    const double log_term = std::max(1.0, std::log(1.0 / static_cast<double>(gamma)));
    const std::uint64_t budget =
        static_cast<std::uint64_t>(std::ceil(64.0 * static_cast<double>(k) * static_cast<double>(k) * log_term));
    RejectionSampleStats local;
    local.budget = budget;
    local.gamma = static_cast<double>(gamma);

    for (std::uint64_t iter = 0; iter < budget; ++iter) {
        ++local.proposed;
        const Index j = proposal.sample(rng);
        const Index s = cols.sample_column(j, rng);
        Scalar value = Scalar(0), denom = Scalar(0);
        for (Index i = 0; i < k; ++i) {
            const Scalar term = w[i] * cols.entry(s, i);
            value += term;
            denom += term * term;
        }
        if (!(denom > Scalar(0))) continue;
        const Scalar r = value * value / (static_cast<Scalar>(k) * denom);
        if (uniform_unit(rng) < static_cast<double>(r)) {
            ++local.accepted;
            if (stats) *stats = local;
            return s;
        }
    }
    if (stats) *stats = local;
    throw std::runtime_error("rejection_sample: acceptance budget exhausted (alpha-orthonormality likely violated)");
}

}  // namespace anchorseek
