#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "anchorseek/datagen.hpp"
#include "anchorseek/fas.hpp"
#include "anchorseek/fkv.hpp"
#include "anchorseek/sampled_matrix.hpp"
#include "anchorseek/types.hpp"

namespace anchorseek {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Dense matrix containers: MatrixMarket, headerless CSV, binary.

inline MatrixXd read_matrix_market(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty MatrixMarket file: " + path);
    std::istringstream header(line);
    std::string banner, object, format, field, symmetry;
    header >> banner >> object >> format >> field >> symmetry;
    if (banner != "%%MatrixMarket" || object != "matrix")
        throw std::runtime_error("not a MatrixMarket matrix: " + path);
    if (field != "real" && field != "integer" && field != "double")
        throw std::runtime_error("unsupported MatrixMarket field '" + field + "'");
    if (symmetry != "general")
        throw std::runtime_error("unsupported MatrixMarket symmetry '" + symmetry + "'");
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '%') break;
    }
    std::istringstream sizes(line);
    if (format == "coordinate") {
        Index m = 0, n = 0;
        std::uint64_t nnz = 0;
        sizes >> m >> n >> nnz;
        if (m < 1 || n < 1) throw std::runtime_error("bad MatrixMarket sizes in " + path);
        MatrixXd a = MatrixXd::Zero(m, n);
        for (std::uint64_t e = 0; e < nnz; ++e) {
            Index i = 0, j = 0;
            double v = 0;
            if (!(in >> i >> j >> v)) throw std::runtime_error("truncated MatrixMarket file: " + path);
            if (i < 1 || i > m || j < 1 || j > n) throw std::runtime_error("entry out of range in " + path);
            a(i - 1, j - 1) = v;
        }
        return a;
    }
    if (format == "array") {
        Index m = 0, n = 0;
        sizes >> m >> n;
        if (m < 1 || n < 1) throw std::runtime_error("bad MatrixMarket sizes in " + path);
        MatrixXd a(m, n);
        for (Index j = 0; j < n; ++j)  // array format is column-major
            for (Index i = 0; i < m; ++i)
                if (!(in >> a(i, j))) throw std::runtime_error("truncated MatrixMarket file: " + path);
        return a;
    }
    throw std::runtime_error("unsupported MatrixMarket format '" + format + "'");
}

inline void write_matrix_market(const std::string& path, const MatrixXd& a) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "%%MatrixMarket matrix array real general\n";
    out << a.rows() << " " << a.cols() << "\n";
    out.precision(17);
    for (Index j = 0; j < a.cols(); ++j)
        for (Index i = 0; i < a.rows(); ++i) out << a(i, j) << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline MatrixXd read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error("ragged CSV: " + path);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("empty CSV: " + path);
    MatrixXd a(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j) a(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return a;
}

inline void write_csv(const std::string& path, const MatrixXd& a) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.precision(17);
    for (Index i = 0; i < a.rows(); ++i) {
        for (Index j = 0; j < a.cols(); ++j) out << (j ? "," : "") << a(i, j);
        out << "\n";
    }
}

inline constexpr char kBinaryMagic[4] = {'A', 'N', 'S', 'K'};
inline constexpr std::uint32_t kBinaryVersion = 1;

/// Binary container: magic "ANSK", u32 version, u64 m, u64 n, then m*n
/// row-major float64 entries, little-endian throughout.
inline void save_matrix_binary(const std::string& path, const SampledMatrixXd& a) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(kBinaryMagic, 4);
    const std::uint32_t version = kBinaryVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    const std::uint64_t m = static_cast<std::uint64_t>(a.rows());
    const std::uint64_t n = static_cast<std::uint64_t>(a.cols());
    out.write(reinterpret_cast<const char*>(&m), sizeof m);
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    const MatrixXd dense = a.to_dense();
    for (Index i = 0; i < dense.rows(); ++i)
        for (Index j = 0; j < dense.cols(); ++j) {
            const double v = dense(i, j);
            out.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline MatrixXd load_matrix_binary_dense(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kBinaryMagic, 4) != 0)
        throw std::runtime_error("bad magic in " + path);
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    if (version != kBinaryVersion) throw std::runtime_error("unsupported version in " + path);
    std::uint64_t m = 0, n = 0;
    in.read(reinterpret_cast<char*>(&m), sizeof m);
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    if (!in || m == 0 || n == 0) throw std::runtime_error("bad dimensions in " + path);
    MatrixXd a(static_cast<Index>(m), static_cast<Index>(n));
    for (std::uint64_t i = 0; i < m; ++i)
        for (std::uint64_t j = 0; j < n; ++j) {
            double v = 0;
            in.read(reinterpret_cast<char*>(&v), sizeof v);
            if (!in) throw std::runtime_error("truncated binary matrix: " + path);
            a(static_cast<Index>(i), static_cast<Index>(j)) = v;
        }
    return a;
}

/// Rebuild the sample-model structure from the binary container.
inline SampledMatrixXd load_matrix_binary(const std::string& path) {
    return SampledMatrixXd(load_matrix_binary_dense(path));
}

/// Dispatch on extension: .mtx/.mm MatrixMarket, .csv CSV, .ansk binary.
inline MatrixXd read_matrix_auto(const std::string& path) {
    const std::string ext = std::filesystem::path(path).extension().string();
    if (ext == ".mtx" || ext == ".mm") return read_matrix_market(path);
    if (ext == ".csv") return read_csv(path);
    if (ext == ".ansk" || ext == ".bin") return load_matrix_binary_dense(path);
    throw std::runtime_error("unrecognized matrix extension '" + ext + "' (want .mtx/.mm/.csv/.ansk)");
}

// ---------------------------------------------------------------------------
// JSON serialization.

namespace detail {

inline json vector_to_json(const VectorXd& v) {
    json arr = json::array();
    for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

inline VectorXd vector_from_json(const json& arr) {
    VectorXd v(static_cast<Index>(arr.size()));
    for (Index i = 0; i < v.size(); ++i) v[i] = arr[static_cast<std::size_t>(i)].get<double>();
    return v;
}

inline json matrix_to_json(const MatrixXd& m) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline MatrixXd matrix_from_json(const json& rows) {
    const Index r = static_cast<Index>(rows.size());
    const Index c = r > 0 ? static_cast<Index>(rows[0].size()) : 0;
    MatrixXd m(r, c);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
    return m;
}

inline std::uint64_t fnv1a64(const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string matrix_checksum(const MatrixXd& m) {
    std::vector<double> row_major;
    row_major.reserve(static_cast<std::size_t>(m.size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) row_major.push_back(m(i, j));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(row_major.data(), row_major.size() * sizeof(double))));
    return std::string(buf);
}

}  // namespace detail

inline json sketch_to_json(const SketchDescription<double>& d, std::uint64_t seed = 0) {
    json j;
    j["side"] = d.side == SketchSide::RowSpace ? "row_space" : "column_space";
    j["sampled_indices"] = d.sampled;
    j["weights"] = detail::vector_to_json(d.weights);
    j["sampled_norms"] = detail::vector_to_json(d.sampled_norms);
    j["singular_values"] = detail::vector_to_json(d.sigma);
    j["small_vectors"] = detail::matrix_to_json(d.small_vectors);
    j["parameters"] = {{"rank", d.rank_request}, {"epsilon", d.epsilon}, {"delta", d.delta},
                       {"p", d.p},               {"q", d.q},             {"exact_rows", d.exact_rows},
                       {"exact_cols", d.exact_cols}};
    j["source_frobenius_sq"] = d.source_frobenius_sq;
    j["seed"] = seed;
    return j;
}

/// Rebind a serialized description to its source matrix and rebuild the
/// sampling caches.
inline SketchDescription<double> sketch_from_json(const json& j, const SampledMatrixXd* source) {
    SketchDescription<double> d;
    d.side = j.at("side").get<std::string>() == "row_space" ? SketchSide::RowSpace : SketchSide::ColumnSpace;
    d.sampled = j.at("sampled_indices").get<std::vector<Index>>();
    d.weights = detail::vector_from_json(j.at("weights"));
    d.sampled_norms = detail::vector_from_json(j.at("sampled_norms"));
    d.sigma = detail::vector_from_json(j.at("singular_values"));
    d.small_vectors = detail::matrix_from_json(j.at("small_vectors"));
    const json& params = j.at("parameters");
    d.rank_request = params.at("rank").get<Index>();
    d.epsilon = params.at("epsilon").get<double>();
    d.delta = params.at("delta").get<double>();
    d.p = params.at("p").get<Index>();
    d.q = params.at("q").get<Index>();
    d.exact_rows = params.at("exact_rows").get<bool>();
    d.exact_cols = params.at("exact_cols").get<bool>();
    d.source_frobenius_sq = j.at("source_frobenius_sq").get<double>();
    d.source = source;
    rebuild_description_caches(d);
    return d;
}

inline json report_to_json(const AnchorReport<double>& r) {
    json j;
    j["anchors"] = r.anchors;
    j["m"] = r.m;
    j["n"] = r.n;
    j["rank_deficit"] = r.rank_deficit;
    j["effective_projections"] = r.effective_projections;
    j["coverage_bound"] = r.coverage_bound;
    j["exact_path"] = {{"right_sketch", r.exact_path_v}, {"left_sketch", r.exact_path_u}};
    j["sketch_ranks"] = {{"right", r.rank_v}, {"left", r.rank_u}};
    j["product"] = {{"samples_per_entry", r.product_samples_per_entry}, {"capped", r.product_capped}};
    j["config"] = {{"rank", r.config.rank},
                   {"kappa", r.config.kappa},
                   {"delta", r.config.delta},
                   {"coverage_alpha", r.config.coverage_alpha},
                   {"materialize_sketches", r.config.materialize_sketches},
                   {"product_sample_cap", r.config.product_sample_cap},
                   {"fkv_sample_factor", r.config.fkv_sample_factor},
                   {"seed", r.config.seed}};
    j["derived"] = {{"epsilon", r.derived.epsilon},
                    {"epsilon_clamped", r.derived.epsilon_clamped},
                    {"eps_v", r.derived.eps_v},
                    {"eps_u", r.derived.eps_u},
                    {"zeta", r.derived.zeta},
                    {"delta_v", r.derived.delta_v},
                    {"delta_u", r.derived.delta_u},
                    {"eta", r.derived.eta},
                    {"gamma", r.derived.gamma},
                    {"projections", r.derived.s},
                    {"votes", r.derived.votes}};
    json projections = json::array();
    for (const auto& rec : r.projections) {
        json p;
        p["x"] = detail::vector_to_json(rec.x);
        p["winner"] = rec.winner;
        p["margin"] = rec.margin;
        p["low_confidence"] = rec.low_confidence;
        p["status"] = rec.status == ProjectionStatus::Ok ? "ok"
                      : rec.status == ProjectionStatus::Degenerate ? "degenerate"
                                                                   : "aborted";
        p["proposals"] = rec.proposals;
        p["accepted"] = rec.accepted;
        json hist = json::array();
        for (const auto& [idx, count] : rec.histogram) hist.push_back({{"index", idx}, {"votes", count}});
        p["histogram"] = std::move(hist);
        projections.push_back(std::move(p));
    }
    j["projections"] = std::move(projections);
    j["telemetry"] = {{"sketch_v_accesses", r.telemetry.sketch_v_accesses},
                      {"sketch_u_accesses", r.telemetry.sketch_u_accesses},
                      {"estimate_accesses", r.telemetry.estimate_accesses},
                      {"projection_accesses", r.telemetry.projection_accesses},
                      {"total_accesses", r.telemetry.total_accesses},
                      {"sketch_ms", r.telemetry.sketch_ms},
                      {"estimate_ms", r.telemetry.estimate_ms},
                      {"projections_ms", r.telemetry.projections_ms},
                      {"total_ms", r.telemetry.total_ms}};
    return j;
}

inline json instance_sidecar(const SeparableInstance<double>& inst) {
    json j;
    j["anchors"] = inst.anchors;
    j["params"] = {{"k", inst.k},
                   {"m", inst.m},
                   {"n", inst.n},
                   {"margin", inst.margin},
                   {"kappa_target", inst.kappa_target},
                   {"kappa_achieved", inst.kappa_achieved},
                   {"kappa_target_met", inst.kappa_target_met}};
    j["seed"] = inst.seed;
    j["mixing_checksum"] = detail::matrix_checksum(inst.mixing);
    return j;
}

inline void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

inline json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    in >> j;
    return j;
}

}  // namespace anchorseek
