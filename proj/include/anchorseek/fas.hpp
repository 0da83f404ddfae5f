#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "anchorseek/baselines.hpp"
#include "anchorseek/estimate.hpp"
#include "anchorseek/fkv.hpp"
#include "anchorseek/rng.hpp"
#include "anchorseek/sampled_matrix.hpp"

namespace anchorseek {

/**
 * All knobs of the anchor-seeking pipeline. Tolerances left at 0 are
 * derived from (m, k, kappa, delta) exactly as the per-stage settings
 * prescribe; explicit values override the derivation.
 */
struct FasConfig {
    Index rank = 0;               // k = rank(A); required
    double kappa = 1.0;           // condition-number bound, an input (not estimated)
    double delta = 0.1;           // total failure probability
    double coverage_alpha = 1.0;  // alpha in s = (3/alpha) k ln k
    Index projections = 0;        // s; 0 -> max(k, required_projections(k, coverage_alpha))
    Index votes = 0;              // N; 0 -> ceil(ln^2 m)
    double epsilon = 0.0;         // total-variation budget; 0 -> derived, clamped at 0.5
    double c_v = 1.0;             // constant factors inside the O(.) settings
    double c_u = 1.0;
    double c_zeta = 1.0;
    double fkv_sample_factor = 1.0;
    double sigma_drop = 1e-8;
    bool materialize_sketches = true;       // desk-scale fast path; off for access-count benchmarks
    std::uint64_t product_sample_cap = 2'000'000;  // per-entry budget for the M estimate; 0 = none
    Index norm_estimate_samples = 4096;     // live-mode column-norm estimation
    std::uint64_t seed = 0;
    int threads = 0;  // 0 -> hardware; env ANCHORSEEK_THREADS caps either way
};

struct FasDerived {
    double epsilon = 0;
    bool epsilon_clamped = false;  // the m-based bound exceeded 0.5 (small-m regime)
    double eps_v = 0, eps_u = 0, zeta = 0;
    double delta_v = 0, delta_u = 0, eta = 0, gamma = 0;
    Index s = 0;
    Index votes = 0;
};

/// s = ceil((3/alpha) k ln k), clamped to at least 1.
inline Index required_projections(Index k, double coverage_alpha) {
    if (k < 1) throw std::invalid_argument("required_projections: k must be >= 1");
    if (!(coverage_alpha > 0)) throw std::invalid_argument("required_projections: alpha must be > 0");
    const double s = (3.0 / coverage_alpha) * static_cast<double>(k) * std::log(static_cast<double>(k));
    return std::max<Index>(1, static_cast<Index>(std::ceil(s)));
}

/// Failure bound 1 - k exp(-alpha s / (3k)) reported alongside the count.
inline double projection_coverage_bound(Index k, Index s, double coverage_alpha) {
    return 1.0 - static_cast<double>(k) *
                     std::exp(-coverage_alpha * static_cast<double>(s) / (3.0 * static_cast<double>(k)));
}

inline FasDerived derive_fas_params(const FasConfig& cfg, Index m) {
    if (cfg.rank < 1) throw std::invalid_argument("derive_fas_params: rank must be set");
    if (!(cfg.kappa >= 1.0)) throw std::invalid_argument("derive_fas_params: kappa must be >= 1");
    if (!(cfg.delta > 0.0) || !(cfg.delta < 1.0))
        throw std::invalid_argument("derive_fas_params: delta must be in (0,1)");
    FasDerived d;
    const double k = static_cast<double>(cfg.rank);
    const double log2m = std::max(1.0, std::pow(std::log(std::max<double>(2.0, static_cast<double>(m))), 2.0));
    d.votes = cfg.votes > 0 ? cfg.votes : static_cast<Index>(std::ceil(log2m));
    d.s = cfg.projections > 0 ? cfg.projections
                              : std::max<Index>(cfg.rank, required_projections(cfg.rank, cfg.coverage_alpha));
    if (cfg.epsilon > 0.0) {
        d.epsilon = cfg.epsilon;
    } else {
        const double bound = 2.0 * std::sqrt(2.0 * std::log(4.0 * log2m / cfg.delta) / log2m);
        d.epsilon = 0.999 * bound;
        if (d.epsilon > 0.5) {
            d.epsilon = 0.5;
            d.epsilon_clamped = true;
        }
    }
    const double clamp01 = 0.999999;
    d.eps_v = std::min(clamp01, cfg.c_v * std::min(d.epsilon / (std::sqrt(k) * cfg.kappa),
                                                   1.0 / (k * cfg.kappa * cfg.kappa)));
    d.eps_u = std::min(clamp01, cfg.c_u * std::min(d.epsilon / k, 1.0 / (k * cfg.kappa * cfg.kappa)));
    d.zeta = std::min(clamp01, cfg.c_zeta * d.epsilon / (k * k * cfg.kappa));
    d.delta_v = 1.0 - std::pow(1.0 - cfg.delta, 0.25);
    d.delta_u = d.delta_v;
    d.eta = d.delta_v;
    d.gamma = 1.0 - std::pow(1.0 - cfg.delta, 1.0 / (4.0 * static_cast<double>(d.s)));
    return d;
}

enum class ProjectionStatus { Ok, Degenerate, Aborted };

template <typename Scalar>
struct ProjectionRecord {
    Vector<Scalar> x;  // random direction in R^{k'}
    Index winner = -1;
    std::vector<std::pair<Index, std::uint64_t>> histogram;  // (index, votes), sorted by index
    double margin = 0.0;                                     // (N_max - N_secmax) / N
    bool low_confidence = false;
    ProjectionStatus status = ProjectionStatus::Ok;
    std::uint64_t proposals = 0;
    std::uint64_t accepted = 0;
};

template <typename Scalar>
struct FasTelemetry {
    std::uint64_t sketch_v_accesses = 0;
    std::uint64_t sketch_u_accesses = 0;
    std::uint64_t estimate_accesses = 0;
    std::uint64_t projection_accesses = 0;
    std::uint64_t total_accesses = 0;
    double sketch_ms = 0, estimate_ms = 0, projections_ms = 0, total_ms = 0;
};

template <typename Scalar>
struct AnchorReport {
    std::vector<Index> anchors;  // sorted, duplicate-free
    std::vector<ProjectionRecord<Scalar>> projections;
    FasConfig config;
    FasDerived derived;
    Index m = 0, n = 0;
    Index rank_v = 0, rank_u = 0;  // effective sketch ranks
    bool exact_path_v = false, exact_path_u = false;
    bool rank_deficit = false;  // |R| < k
    Index effective_projections = 0;
    std::uint64_t product_samples_per_entry = 0;
    bool product_capped = false;
    double coverage_bound = 0.0;
    FasTelemetry<Scalar> telemetry;
};

/// Materialized l1-row-normalized copy in the sample model. Anchors of the
/// normalized matrix coincide with the anchors of the conical hull of A.
template <typename Scalar>
SampledMatrix<Scalar> l1_normalize_view(const SampledMatrix<Scalar>& a) {
    return SampledMatrix<Scalar>(l1_normalize_rows(a.to_dense()));
}

/**
 * Norm-only virtual view of the l1-normalized matrix: keeps the source
 * sample model plus one tree over the normalized row norms instead of
 * materializing the normalized entries. Serves the row-side access modes
 * (entry, row norm, row sampling — the within-row distribution is scale
 * invariant). Column-side access is not available through this view.
 */
template <typename Scalar>
class RowL1View {
public:
    explicit RowL1View(const SampledMatrix<Scalar>& a)
        : a_(&a), inv_l1_(a.rows()), row_norms_(Vector<Scalar>::Zero(a.rows())) {
        const Matrix<Scalar> dense = a.to_dense();
        Vector<Scalar> scaled(a.rows());
        for (Index i = 0; i < a.rows(); ++i) {
            const Scalar l1 = dense.row(i).template lpNorm<1>();
            if (!(l1 > Scalar(0))) throw std::domain_error("RowL1View: zero row");
            inv_l1_[i] = Scalar(1) / l1;
            scaled[i] = dense.row(i).norm() * inv_l1_[i];
        }
        row_norms_ = SampledVector<Scalar>(scaled);
    }

    Index rows() const { return a_->rows(); }
    Index cols() const { return a_->cols(); }
    Scalar entry(Index i, Index j) const { return a_->entry(i, j) * inv_l1_[i]; }
    Scalar row_norm(Index i) const { return a_->row_norm(i) * inv_l1_[i]; }
    Scalar frobenius_squared() const { return row_norms_.squared_norm(); }
    Index sample_row_index(Rng& rng) const { return row_norms_.sample(rng); }
    Index sample_in_row(Index i, Rng& rng) const { return a_->sample_in_row(i, rng); }

private:
    const SampledMatrix<Scalar>* a_;
    Vector<Scalar> inv_l1_;
    SampledVector<Scalar> row_norms_;
};

namespace detail {

inline int resolve_threads(int requested, Index jobs) {
    int threads = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
    if (const char* env = std::getenv("ANCHORSEEK_THREADS")) {
        const int cap = std::atoi(env);
        if (cap > 0) threads = std::min(threads, cap);
    }
    return static_cast<int>(std::min<Index>(threads, std::max<Index>(jobs, 1)));
}

template <typename F>
void parallel_for(Index count, int threads, F&& body) {
    if (count <= 0) return;
    if (threads <= 1) {
        for (Index i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<Index> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (Index i = next.fetch_add(1); i < count; i = next.fetch_add(1)) body(i);
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace detail

/**
 * One random projection: y = M x computed directly (k x k by k), then
 * `votes` draws from D_{Uhat y} via rejection sampling; returns the modal
 * index (ties to the smallest), the vote histogram and the margin. A
 * margin below the most-frequent-index threshold 2 sqrt(2 log(4N/delta)/N)
 * + epsilon flags the projection low-confidence.
 */
template <typename Scalar, SampleableColumns<Scalar> Cols>
ProjectionRecord<Scalar> project_and_vote(const Cols& ucols, const Matrix<Scalar>& m_tilde,
                                          const Vector<Scalar>& x, Index votes, Scalar gamma,
                                          Scalar delta_for_flag, Scalar eps_for_flag, Rng& rng) {
    if (votes < 1) throw std::invalid_argument("project_and_vote: need at least one vote");
    ProjectionRecord<Scalar> rec;
    rec.x = x;
    const Vector<Scalar> y = m_tilde * x;
    if (!(y.norm() > Scalar(0))) {
        rec.status = ProjectionStatus::Degenerate;
        return rec;
    }
    std::map<Index, std::uint64_t> hist;
    for (Index v = 0; v < votes; ++v) {
        RejectionSampleStats stats;
        try {
            const Index s = rejection_sample<Scalar>(ucols, y, gamma, rng, &stats);
            rec.proposals += stats.proposed;
            rec.accepted += stats.accepted;
            ++hist[s];
        } catch (const std::runtime_error&) {
            rec.proposals += stats.proposed;
            rec.status = ProjectionStatus::Aborted;
            return rec;
        }
    }
    std::uint64_t best = 0, second = 0;
    for (const auto& [idx, count] : hist) {
        rec.histogram.emplace_back(idx, count);
        if (count > best) {
            second = best;
            best = count;
            rec.winner = idx;
        } else if (count > second) {
            second = count;
        }
    }
    rec.margin = static_cast<double>(best - second) / static_cast<double>(votes);
    const double threshold =
        2.0 * std::sqrt(2.0 * std::log(4.0 * static_cast<double>(votes) / static_cast<double>(delta_for_flag)) /
                        static_cast<double>(votes)) +
        static_cast<double>(eps_for_flag);
    rec.low_confidence = rec.margin < threshold;
    return rec;
}

/**
 * Fast anchors seeking: l1-normalize, sketch the row and column spaces,
 * estimate M = Uhat^T A Vhat, then vote over s random projections of the
 * row space, accumulating the winning indices.
 */
template <typename Scalar>
AnchorReport<Scalar> fas_run(const SampledMatrix<Scalar>& a, const FasConfig& cfg) {
    using clock = std::chrono::steady_clock;
    const auto ms_since = [](clock::time_point t0) {
        return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    };

    const Index m = a.rows(), n = a.cols();
    if (cfg.rank < 1 || cfg.rank > std::min(m, n)) throw std::invalid_argument("fas_run: rank out of range");

    const Matrix<Scalar> raw = a.to_dense();
    if (raw.minCoeff() < Scalar(0)) throw std::invalid_argument("fas_run: matrix must be nonnegative");

    AnchorReport<Scalar> report;
    report.config = cfg;
    report.m = m;
    report.n = n;
    report.derived = derive_fas_params(cfg, m);
    const FasDerived& der = report.derived;
    report.coverage_bound = projection_coverage_bound(cfg.rank, der.s, cfg.coverage_alpha);

    const SampledMatrix<Scalar> normalized(l1_normalize_rows(raw));
    normalized.reset_accesses();
    const auto t_total = clock::now();

    FkvOptions<Scalar> fkv_opts;
    fkv_opts.sample_factor = static_cast<Scalar>(cfg.fkv_sample_factor);
    fkv_opts.sigma_drop = static_cast<Scalar>(cfg.sigma_drop);
    fkv_opts.materialize = cfg.materialize_sketches;

    const auto t_sketch = clock::now();
    Rng rng_v = derive_rng(cfg.seed, 1);
    const auto sketch_v = fkv_sketch(normalized, cfg.rank, static_cast<Scalar>(der.eps_v),
                                     static_cast<Scalar>(der.delta_v), rng_v, fkv_opts);
    report.telemetry.sketch_v_accesses = normalized.accesses();
    Rng rng_u = derive_rng(cfg.seed, 2);
    const auto sketch_u = fkv_sketch_left(normalized, cfg.rank, static_cast<Scalar>(der.eps_u),
                                          static_cast<Scalar>(der.delta_u), rng_u, fkv_opts);
    report.telemetry.sketch_u_accesses = normalized.accesses() - report.telemetry.sketch_v_accesses;
    report.telemetry.sketch_ms = ms_since(t_sketch);
    report.rank_v = sketch_v.num_columns();
    report.rank_u = sketch_u.num_columns();
    report.exact_path_v = sketch_v.exact_rows && sketch_v.exact_cols;
    report.exact_path_u = sketch_u.exact_rows && sketch_u.exact_cols;

    const auto t_estimate = clock::now();
    Rng rng_e = derive_rng(cfg.seed, 3);
    EstimateOptions<Scalar> eopts;
    eopts.per_entry_cap = cfg.product_sample_cap;
    const auto est = estimate_product(normalized, SketchTransposeQuery<Scalar>{&sketch_u},
                                      SketchQuery<Scalar>{&sketch_v}, static_cast<Scalar>(der.zeta),
                                      static_cast<Scalar>(der.eta), rng_e, eopts);
    report.product_samples_per_entry = est.per_entry_samples;
    report.product_capped = est.capped;
    report.telemetry.estimate_accesses =
        normalized.accesses() - report.telemetry.sketch_v_accesses - report.telemetry.sketch_u_accesses;
    report.telemetry.estimate_ms = ms_since(t_estimate);

    const SketchColumns<Scalar> ucols(sketch_u, cfg.norm_estimate_samples,
                                      detail::mix64(cfg.seed ^ 0x6e6f726d5eedull));

    const auto t_proj = clock::now();
    report.projections.resize(static_cast<std::size_t>(der.s));
    const int threads = detail::resolve_threads(cfg.threads, der.s);
    detail::parallel_for(der.s, threads, [&](Index i) {
        Rng rng_i = derive_rng(cfg.seed, 5, static_cast<std::uint64_t>(i));
        const Vector<Scalar> x = random_unit_vector<Scalar>(sketch_v.num_columns(), rng_i);
        report.projections[static_cast<std::size_t>(i)] =
            project_and_vote<Scalar>(ucols, est.m_tilde, x, der.votes, static_cast<Scalar>(der.gamma),
                                     static_cast<Scalar>(cfg.delta), static_cast<Scalar>(der.epsilon), rng_i);
    });
    report.telemetry.projections_ms = ms_since(t_proj);

    std::set<Index> unions;
    for (const auto& rec : report.projections) {
        if (rec.status == ProjectionStatus::Ok) {
            ++report.effective_projections;
            unions.insert(rec.winner);
        }
    }
    report.anchors.assign(unions.begin(), unions.end());
    report.rank_deficit = static_cast<Index>(report.anchors.size()) < cfg.rank;
    report.telemetry.projection_accesses =
        normalized.accesses() - report.telemetry.sketch_v_accesses - report.telemetry.sketch_u_accesses -
        report.telemetry.estimate_accesses;
    report.telemetry.total_accesses = normalized.accesses();
    report.telemetry.total_ms = ms_since(t_total);
    return report;
}

}  // namespace anchorseek
