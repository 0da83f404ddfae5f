#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "anchorseek/rng.hpp"
#include "anchorseek/types.hpp"

namespace anchorseek {

/// Uniform random unit vector on the (k-1)-sphere.
template <typename Scalar = double>
Vector<Scalar> random_unit_vector(Index k, Rng& rng) {
    if (k < 1) throw std::invalid_argument("random_unit_vector: k must be >= 1");
    Vector<Scalar> x(k);
    Scalar norm = Scalar(0);
    do {
        for (Index i = 0; i < k; ++i) x[i] = static_cast<Scalar>(normal_unit(rng));
        norm = x.norm();
    } while (!(norm > Scalar(1e-30)));
    return x / norm;
}

template <typename Scalar>
struct SvdResult {
    Matrix<Scalar> u;       // m x r
    Vector<Scalar> sigma;   // r, descending
    Matrix<Scalar> v;       // n x r
};

/// Best rank-k factors under the Frobenius norm (thin SVD, truncated).
template <typename Scalar>
SvdResult<Scalar> dense_svd(const Matrix<Scalar>& a, Index k) {
    Eigen::BDCSVD<Matrix<Scalar>> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Index r = std::min(k, std::min(a.rows(), a.cols()));
    return SvdResult<Scalar>{svd.matrixU().leftCols(r), svd.singularValues().head(r),
                             svd.matrixV().leftCols(r)};
}

template <typename Scalar>
Vector<Scalar> singular_values(const Matrix<Scalar>& a) {
    Eigen::BDCSVD<Matrix<Scalar>> svd(a);
    return svd.singularValues();
}

/// Ratio of largest to smallest *nonzero* singular value.
template <typename Scalar>
Scalar condition_number(const Matrix<Scalar>& a, Scalar zero_tol = Scalar(1e-12)) {
    const Vector<Scalar> s = singular_values(a);
    if (s.size() == 0 || !(s[0] > Scalar(0))) throw std::domain_error("condition_number: zero matrix");
    Scalar smallest = s[0];
    for (Index i = 0; i < s.size(); ++i)
        if (s[i] > zero_tol * s[0]) smallest = s[i];
    return s[0] / smallest;
}

/// Squared Frobenius error of the best rank-k approximation.
template <typename Scalar>
Scalar best_rank_k_error_squared(const Matrix<Scalar>& a, Index k) {
    const Vector<Scalar> s = singular_values(a);
    Scalar err = Scalar(0);
    for (Index i = k; i < s.size(); ++i) err += s[i] * s[i];
    return err;
}

/// Orthonormal basis of the row space (right singular vectors with
/// sigma > tol * sigma_max).
template <typename Scalar>
Matrix<Scalar> row_space_basis(const Matrix<Scalar>& a, Scalar zero_tol = Scalar(1e-12)) {
    Eigen::BDCSVD<Matrix<Scalar>> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector<Scalar> s = svd.singularValues();
    Index r = 0;
    while (r < s.size() && s[r] > zero_tol * s[0]) ++r;
    return svd.matrixV().leftCols(r);
}

template <typename Scalar>
Matrix<Scalar> l1_normalize_rows(const Matrix<Scalar>& a) {
    Matrix<Scalar> out = a;
    for (Index i = 0; i < a.rows(); ++i) {
        const Scalar l1 = a.row(i).template lpNorm<1>();
        if (!(l1 > Scalar(0))) throw std::domain_error("l1_normalize_rows: zero row");
        out.row(i) /= l1;
    }
    return out;
}

template <typename Scalar>
struct SpaResult {
    std::vector<Index> indices;  // selection order
    bool complete = true;        // false if rank ran out before k picks
};

/**
 * Successive projection algorithm: greedy max-norm pivoting with
 * orthogonal deflation on the l1-normalized rows. Deterministic; ties go
 * to the smallest index.
 */
template <typename Scalar>
SpaResult<Scalar> spa(const Matrix<Scalar>& a, Index k, Scalar rank_tol = Scalar(1e-10)) {
    if (k < 1 || k > std::min(a.rows(), a.cols()))
        throw std::invalid_argument("spa: k out of range");
    Matrix<Scalar> b = l1_normalize_rows(a);
    const Index m = b.rows();
    SpaResult<Scalar> result;
    Scalar initial_max = Scalar(0);
    for (Index i = 0; i < m; ++i) initial_max = std::max(initial_max, b.row(i).squaredNorm());
    for (Index pick = 0; pick < k; ++pick) {
        Index best = 0;
        Scalar best_sq = Scalar(-1);
        for (Index i = 0; i < m; ++i) {
            const Scalar sq = b.row(i).squaredNorm();
            if (sq > best_sq) {
                best_sq = sq;
                best = i;
            }
        }
        if (!(best_sq > rank_tol * rank_tol * initial_max)) {
            result.complete = false;
            break;
        }
        result.indices.push_back(best);
        const Vector<Scalar> q = b.row(best).transpose() / std::sqrt(best_sq);
        b -= (b * q) * q.transpose();
    }
    return result;
}

/**
 * Exact divide-and-conquer anchoring: project the l1-normalized rows onto
 * s random unit directions drawn from the exact row space (dense SVD
 * basis) and collect the argmax-|component| row of each projection.
 */
template <typename Scalar>
std::vector<Index> exact_dca(const Matrix<Scalar>& a, Index k, Index s, Rng& rng) {
    const Matrix<Scalar> b = l1_normalize_rows(a);
    Matrix<Scalar> basis = row_space_basis(b);
    if (basis.cols() > k) basis = basis.leftCols(k).eval();
    if (basis.cols() == 0) throw std::domain_error("exact_dca: zero matrix");
    std::set<Index> picked;
    for (Index t = 0; t < s; ++t) {
        const Vector<Scalar> x = random_unit_vector<Scalar>(basis.cols(), rng);
        const Vector<Scalar> proj = b * (basis * x);
        Index best = 0;
        for (Index i = 1; i < proj.size(); ++i)
            if (std::abs(proj[i]) > std::abs(proj[best])) best = i;
        picked.insert(best);
    }
    return std::vector<Index>(picked.begin(), picked.end());
}

/// Argmax-|component| row for one given row-space direction; shared by
/// cross-checking harnesses that drive DCA and FAS with the same direction.
template <typename Scalar>
Index dca_winner(const Matrix<Scalar>& l1_rows, const Matrix<Scalar>& basis, const Vector<Scalar>& x) {
    const Vector<Scalar> proj = l1_rows * (basis * x);
    Index best = 0;
    for (Index i = 1; i < proj.size(); ++i)
        if (std::abs(proj[i]) > std::abs(proj[best])) best = i;
    return best;
}

}  // namespace anchorseek
