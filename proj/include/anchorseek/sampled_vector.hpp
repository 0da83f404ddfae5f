#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "anchorseek/rng.hpp"
#include "anchorseek/types.hpp"

namespace anchorseek {

/**
 * Sum-tree over squared entries giving O(log n) entry updates and
 * O(log n) sampling of index i with probability v_i^2 / |v|^2.
 *
 * Layout: implicit complete binary tree in a flat array.
 *   - weight_[1] is the root (= |v|^2),
 *   - node i has children 2i and 2i+1,
 *   - leaves live at [cap_, cap_ + n); cap_ is n rounded up to a power
 *     of two, padded leaves carry weight 0 and are unreachable by sampling.
 * Leaf i stores v_i^2; the sign of v_i is kept separately so the original
 * value can be reconstructed exactly.
 *
 * Every interior weight is written as the floating-point sum of its two
 * children, both at build time and along the update path, so the descent
 * invariant (u < node weight implies u lands in a child) holds exactly.
 */
template <typename Scalar>
class SampledVector {
public:
    template <typename Derived>
    explicit SampledVector(const Eigen::MatrixBase<Derived>& values) {
        const Vector<Scalar> v = values.template cast<Scalar>();
        if (v.size() == 0) throw std::invalid_argument("SampledVector: empty input");
        n_ = v.size();
        cap_ = 1;
        while (cap_ < n_) cap_ <<= 1;
        weight_.assign(static_cast<std::size_t>(2 * cap_), Scalar(0));
        sign_.assign(static_cast<std::size_t>(n_), 0);
        for (Index i = 0; i < n_; ++i) {
            const Scalar x = v[i];
            weight_[static_cast<std::size_t>(cap_ + i)] = x * x;
            sign_[static_cast<std::size_t>(i)] = sign_of(x);
        }
        sum_up();
    }

    SampledVector(const SampledVector& other)
        : n_(other.n_), cap_(other.cap_), weight_(other.weight_), sign_(other.sign_) {
        visits_.store(other.visits_.load(std::memory_order_relaxed), std::memory_order_relaxed);
    }
    SampledVector& operator=(const SampledVector& other) {
        n_ = other.n_;
        cap_ = other.cap_;
        weight_ = other.weight_;
        sign_ = other.sign_;
        visits_.store(other.visits_.load(std::memory_order_relaxed), std::memory_order_relaxed);
        return *this;
    }
    SampledVector(SampledVector&& other) noexcept
        : n_(other.n_), cap_(other.cap_), weight_(std::move(other.weight_)),
          sign_(std::move(other.sign_)) {
        visits_.store(other.visits_.load(std::memory_order_relaxed), std::memory_order_relaxed);
    }
    SampledVector& operator=(SampledVector&& other) noexcept {
        n_ = other.n_;
        cap_ = other.cap_;
        weight_ = std::move(other.weight_);
        sign_ = std::move(other.sign_);
        visits_.store(other.visits_.load(std::memory_order_relaxed), std::memory_order_relaxed);
        return *this;
    }

    Index size() const { return n_; }

    Scalar squared_norm() const {
        bump(1);
        return weight_[1];
    }
    Scalar norm() const { return std::sqrt(squared_norm()); }

    /// Reconstructed entry sign(v_i) * sqrt(v_i^2).
    Scalar get(Index i) const {
        check_range(i);
        bump(1);
        return static_cast<Scalar>(sign_[static_cast<std::size_t>(i)]) *
               std::sqrt(weight_[static_cast<std::size_t>(cap_ + i)]);
    }

    /// Squared magnitude of entry i (leaf weight, no sqrt round-trip).
    Scalar get_squared(Index i) const {
        check_range(i);
        return weight_[static_cast<std::size_t>(cap_ + i)];
    }

    /// Overwrite entry i; refreshes exactly the ancestors of leaf i.
    void set(Index i, Scalar value) {
        check_range(i);
        set_leaf(i, value * value, sign_of(value));
    }

    /// Probability of drawing index i. Throws on a zero vector.
    Scalar density(Index i) const {
        check_range(i);
        const Scalar w = weight_[1];
        if (!(w > Scalar(0))) throw std::domain_error("SampledVector: zero vector has no sampling distribution");
        return weight_[static_cast<std::size_t>(cap_ + i)] / w;
    }

    /// Draw index i with probability v_i^2 / |v|^2.
    Index sample(Rng& rng) const {
        const Scalar total = weight_[1];
        if (!(total > Scalar(0)))
            throw std::domain_error("SampledVector: cannot sample from a zero vector");
        Scalar u = static_cast<Scalar>(uniform_unit(rng)) * total;
        Index node = 1;
        std::uint64_t visited = 1;
        while (node < cap_) {
            node <<= 1;
            const Scalar left = weight_[static_cast<std::size_t>(node)];
            if (!(u < left)) {
                u -= left;
                node |= 1;
            }
            ++visited;
        }
        bump(visited);
        return node - cap_;
    }

    /// Re-sum interior nodes from the leaves (floating-point drift repair).
    void rebuild() { sum_up(); }

    Vector<Scalar> to_vector() const {
        Vector<Scalar> v(n_);
        for (Index i = 0; i < n_; ++i)
            v[i] = static_cast<Scalar>(sign_[static_cast<std::size_t>(i)]) *
                   std::sqrt(weight_[static_cast<std::size_t>(cap_ + i)]);
        return v;
    }

    /// Tree-node visits accumulated by sample/update/query calls.
    std::uint64_t node_visits() const { return visits_.load(std::memory_order_relaxed); }
    void reset_node_visits() const { visits_.store(0, std::memory_order_relaxed); }

private:
    template <typename S>
    friend class SampledMatrix;

    static std::int8_t sign_of(Scalar x) {
        if (x > Scalar(0)) return 1;
        if (x < Scalar(0)) return -1;
        return 0;
    }

    void check_range(Index i) const {
        if (i < 0 || i >= n_) throw std::out_of_range("SampledVector: index out of range");
    }

    // Direct leaf write used by the matrix wrapper to keep norm trees exact
    // (the leaf weight is an already-squared quantity, no sqrt round-trip).
    void set_leaf(Index i, Scalar squared, std::int8_t sign) {
        sign_[static_cast<std::size_t>(i)] = squared > Scalar(0) ? sign : std::int8_t(0);
        Index node = cap_ + i;
        weight_[static_cast<std::size_t>(node)] = squared;
        std::uint64_t visited = 1;
        while (node > 1) {
            node >>= 1;
            weight_[static_cast<std::size_t>(node)] =
                weight_[static_cast<std::size_t>(2 * node)] + weight_[static_cast<std::size_t>(2 * node + 1)];
            ++visited;
        }
        bump(visited);
    }

    void sum_up() {
        for (Index node = cap_ - 1; node >= 1; --node)
            weight_[static_cast<std::size_t>(node)] =
                weight_[static_cast<std::size_t>(2 * node)] + weight_[static_cast<std::size_t>(2 * node + 1)];
    }

    void bump(std::uint64_t k) const { visits_.fetch_add(k, std::memory_order_relaxed); }

    Index n_ = 0;
    Index cap_ = 1;
    std::vector<Scalar> weight_;
    std::vector<std::int8_t> sign_;
    mutable std::atomic<std::uint64_t> visits_{0};
};

using SampledVectorXd = SampledVector<double>;

}  // namespace anchorseek
