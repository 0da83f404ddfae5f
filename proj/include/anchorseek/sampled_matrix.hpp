#pragma once

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "anchorseek/sampled_vector.hpp"

namespace anchorseek {

/**
 * Matrix sample model: one sum-tree per row, one per column, a row-norm
 * tree whose leaf i carries |A_(i)|^2 and a column-norm tree whose leaf j
 * carries |A^(j)|^2. Supports entry query/update in O(log m + log n) and
 * length-squared sampling of rows, columns, and indices within a row or
 * column in O(log) time.
 *
 * The norm trees receive the row/column tree roots verbatim (no
 * sqrt/square round-trip), so "row-norm-tree root == Frobenius^2" holds in
 * the same arithmetic as the row trees themselves.
 *
 * `accesses()` counts logical matrix operations (one per query, sample, or
 * norm lookup) — the cost model under which the sketching pipeline is
 * dimension-independent.
 */
template <typename Scalar>
class SampledMatrix {
public:
    template <typename Derived>
    explicit SampledMatrix(const Eigen::MatrixBase<Derived>& dense) {
        build(Matrix<Scalar>(dense.template cast<Scalar>()));
    }

    explicit SampledMatrix(const Eigen::SparseMatrix<Scalar>& sparse) {
        build(Matrix<Scalar>(sparse));
    }

    SampledMatrix(const SampledMatrix& other)
        : m_(other.m_), n_(other.n_), rows_(other.rows_), cols_(other.cols_),
          row_norms_(other.row_norms_), col_norms_(other.col_norms_) {
        accesses_.store(other.accesses_.load(std::memory_order_relaxed), std::memory_order_relaxed);
    }
    SampledMatrix(SampledMatrix&& other) noexcept
        : m_(other.m_), n_(other.n_), rows_(std::move(other.rows_)), cols_(std::move(other.cols_)),
          row_norms_(std::move(other.row_norms_)), col_norms_(std::move(other.col_norms_)) {
        accesses_.store(other.accesses_.load(std::memory_order_relaxed), std::memory_order_relaxed);
    }
    SampledMatrix& operator=(SampledMatrix&& other) noexcept {
        m_ = other.m_;
        n_ = other.n_;
        rows_ = std::move(other.rows_);
        cols_ = std::move(other.cols_);
        row_norms_ = std::move(other.row_norms_);
        col_norms_ = std::move(other.col_norms_);
        accesses_.store(other.accesses_.load(std::memory_order_relaxed), std::memory_order_relaxed);
        return *this;
    }

    Index rows() const { return m_; }
    Index cols() const { return n_; }

    Scalar entry(Index i, Index j) const {
        check(i, j);
        bump();
        return rows_[static_cast<std::size_t>(i)].get(j);
    }

    /// Same entry read through the column tree; exercised by consistency tests.
    Scalar entry_via_col(Index i, Index j) const {
        check(i, j);
        bump();
        return cols_[static_cast<std::size_t>(j)].get(i);
    }

    void set_entry(Index i, Index j, Scalar value) {
        check(i, j);
        bump();
        auto& row = rows_[static_cast<std::size_t>(i)];
        auto& col = cols_[static_cast<std::size_t>(j)];
        row.set(j, value);
        col.set(i, value);
        row_norms_.set_leaf(i, row.weight_[1], 1);
        col_norms_.set_leaf(j, col.weight_[1], 1);
    }

    Scalar row_norm(Index i) const {
        if (i < 0 || i >= m_) throw std::out_of_range("SampledMatrix: row out of range");
        bump();
        return std::sqrt(rows_[static_cast<std::size_t>(i)].weight_[1]);
    }
    Scalar col_norm(Index j) const {
        if (j < 0 || j >= n_) throw std::out_of_range("SampledMatrix: column out of range");
        bump();
        return std::sqrt(cols_[static_cast<std::size_t>(j)].weight_[1]);
    }
    Scalar frobenius_squared() const {
        bump();
        return row_norms_.weight_[1];
    }
    Scalar frobenius_norm() const { return std::sqrt(frobenius_squared()); }

    /// Row index i with probability |A_(i)|^2 / |A|_F^2.
    Index sample_row_index(Rng& rng) const {
        bump();
        return row_norms_.sample(rng);
    }
    /// Column index j with probability |A^(j)|^2 / |A|_F^2.
    Index sample_col_index(Rng& rng) const {
        bump();
        return col_norms_.sample(rng);
    }
    /// Column index j with probability A_ij^2 / |A_(i)|^2.
    Index sample_in_row(Index i, Rng& rng) const {
        if (i < 0 || i >= m_) throw std::out_of_range("SampledMatrix: row out of range");
        bump();
        return rows_[static_cast<std::size_t>(i)].sample(rng);
    }
    /// Row index i with probability A_ij^2 / |A^(j)|^2.
    Index sample_in_col(Index j, Rng& rng) const {
        if (j < 0 || j >= n_) throw std::out_of_range("SampledMatrix: column out of range");
        bump();
        return cols_[static_cast<std::size_t>(j)].sample(rng);
    }

    const SampledVector<Scalar>& row_tree(Index i) const { return rows_[static_cast<std::size_t>(i)]; }
    const SampledVector<Scalar>& col_tree(Index j) const { return cols_[static_cast<std::size_t>(j)]; }
    const SampledVector<Scalar>& row_norm_tree() const { return row_norms_; }
    const SampledVector<Scalar>& col_norm_tree() const { return col_norms_; }

    Matrix<Scalar> to_dense() const {
        Matrix<Scalar> a(m_, n_);
        for (Index i = 0; i < m_; ++i) a.row(i) = rows_[static_cast<std::size_t>(i)].to_vector().transpose();
        return a;
    }

    /// Re-sum every tree from its leaves and refresh both norm trees.
    void rebuild() {
        for (auto& r : rows_) r.rebuild();
        for (auto& c : cols_) c.rebuild();
        for (Index i = 0; i < m_; ++i) row_norms_.set_leaf(i, rows_[static_cast<std::size_t>(i)].weight_[1], 1);
        for (Index j = 0; j < n_; ++j) col_norms_.set_leaf(j, cols_[static_cast<std::size_t>(j)].weight_[1], 1);
    }

    std::uint64_t accesses() const { return accesses_.load(std::memory_order_relaxed); }
    void reset_accesses() const { accesses_.store(0, std::memory_order_relaxed); }

private:
    void check(Index i, Index j) const {
        if (i < 0 || i >= m_ || j < 0 || j >= n_)
            throw std::out_of_range("SampledMatrix: entry out of range");
    }

    void build(const Matrix<Scalar>& a) {
        m_ = a.rows();
        n_ = a.cols();
        if (m_ < 1 || n_ < 1) throw std::invalid_argument("SampledMatrix: dimensions must be positive");
        rows_.reserve(static_cast<std::size_t>(m_));
        cols_.reserve(static_cast<std::size_t>(n_));
        for (Index i = 0; i < m_; ++i) rows_.emplace_back(a.row(i).transpose());
        for (Index j = 0; j < n_; ++j) cols_.emplace_back(a.col(j));
        row_norms_ = zero_tree(m_);
        col_norms_ = zero_tree(n_);
        for (Index i = 0; i < m_; ++i) row_norms_.set_leaf(i, rows_[static_cast<std::size_t>(i)].weight_[1], 1);
        for (Index j = 0; j < n_; ++j) col_norms_.set_leaf(j, cols_[static_cast<std::size_t>(j)].weight_[1], 1);
        row_norms_.reset_node_visits();
        col_norms_.reset_node_visits();
    }

    static SampledVector<Scalar> zero_tree(Index n) { return SampledVector<Scalar>(Vector<Scalar>::Zero(n)); }

    Index m_ = 0;
    Index n_ = 0;
    std::vector<SampledVector<Scalar>> rows_;
    std::vector<SampledVector<Scalar>> cols_;
    SampledVector<Scalar> row_norms_ = zero_tree(1);
    SampledVector<Scalar> col_norms_ = zero_tree(1);
    mutable std::atomic<std::uint64_t> accesses_{0};

    void bump() const { accesses_.fetch_add(1, std::memory_order_relaxed); }
};

using SampledMatrixXd = SampledMatrix<double>;

/**
 * Role-swapping facade: presents either A or A^T through the row-side
 * sample-model operations, so algorithms written against rows run
 * unchanged on the transpose (column trees play the role of row trees).
 */
template <typename Scalar>
class MatrixAccess {
public:
    explicit MatrixAccess(const SampledMatrix<Scalar>& a, bool transposed = false)
        : a_(&a), t_(transposed) {}

    Index rows() const { return t_ ? a_->cols() : a_->rows(); }
    Index cols() const { return t_ ? a_->rows() : a_->cols(); }
    bool transposed() const { return t_; }
    const SampledMatrix<Scalar>& matrix() const { return *a_; }

    Scalar entry(Index i, Index j) const { return t_ ? a_->entry(j, i) : a_->entry(i, j); }
    Scalar row_norm(Index i) const { return t_ ? a_->col_norm(i) : a_->row_norm(i); }
    Scalar frobenius_squared() const { return a_->frobenius_squared(); }
    Index sample_row_index(Rng& rng) const { return t_ ? a_->sample_col_index(rng) : a_->sample_row_index(rng); }
    Index sample_in_row(Index i, Rng& rng) const { return t_ ? a_->sample_in_col(i, rng) : a_->sample_in_row(i, rng); }

private:
    const SampledMatrix<Scalar>* a_;
    bool t_;
};

}  // namespace anchorseek
