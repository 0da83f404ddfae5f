// anchorseek: generate separable instances, find their anchors with the
// sampling pipeline or with dense baselines, sketch matrices, and benchmark
// access counts across matrix sizes.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "anchorseek/baselines.hpp"
#include "anchorseek/datagen.hpp"
#include "anchorseek/fas.hpp"
#include "anchorseek/fkv.hpp"
#include "anchorseek/io.hpp"

namespace {

using namespace anchorseek;

constexpr int kExitOk = 0;
constexpr int kExitSolver = 1;
constexpr int kExitUsage = 2;

std::string iso_timestamp() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

json make_manifest(const std::string& subcommand, const std::string& input,
                   const std::string& output, std::uint64_t seed, const json& params) {
    json m;
    m["subcommand"] = subcommand;
    m["input"] = input;
    m["output"] = output;
    m["seed"] = seed;
    m["params"] = params;
    m["version"] = kVersion;
    m["timestamp"] = iso_timestamp();
    return m;
}

struct SolveFlags {
    std::string input, output = "report.json";
    Index rank = 0;
    double kappa = 1.0;
    double delta = 0.1;
    double epsilon = 0.0;
    Index projections = 0;
    Index votes = 0;
    double coverage_alpha = 1.0;
    std::uint64_t seed = 0;
    double fkv_c = 1.0;
    std::uint64_t sample_cap = 2'000'000;
    bool live = false;
    bool dry_run = false;
    bool verbose = false;
};

FasConfig to_config(const SolveFlags& f) {
    FasConfig cfg;
    cfg.rank = f.rank;
    cfg.kappa = f.kappa;
    cfg.delta = f.delta;
    cfg.epsilon = f.epsilon;
    cfg.projections = f.projections;
    cfg.votes = f.votes;
    cfg.coverage_alpha = f.coverage_alpha;
    cfg.seed = f.seed;
    cfg.fkv_sample_factor = f.fkv_c;
    cfg.product_sample_cap = f.sample_cap;
    cfg.materialize_sketches = !f.live;
    return cfg;
}

int cmd_generate(Index k, Index m, Index n, double kappa_target, double margin,
                 std::uint64_t seed, const std::string& output) {
    const auto inst = generate<double>(k, m, n, kappa_target, margin, seed);
    if (!inst.kappa_target_met)
        std::cerr << "warning: kappa target " << kappa_target << " not met, achieved "
                  << inst.kappa_achieved << "\n";
    const std::string matrix_path = output + ".mtx";
    const std::string sidecar_path = output + ".json";
    write_matrix_market(matrix_path, inst.a);
    write_json(sidecar_path, instance_sidecar(inst));
    write_json(output + ".manifest.json",
               make_manifest("generate", "", matrix_path, seed,
                             {{"k", k}, {"m", m}, {"n", n}, {"kappa_target", kappa_target},
                              {"margin", margin}}));
    std::cout << "wrote " << matrix_path << " and " << sidecar_path << "\n";
    return kExitOk;
}

int cmd_solve(const SolveFlags& f) {
    const MatrixXd dense = read_matrix_auto(f.input);
    FasConfig cfg = to_config(f);

    if (f.dry_run) {
        const auto derived = derive_fas_params(cfg, dense.rows());
        json j;
        j["epsilon"] = derived.epsilon;
        j["epsilon_clamped"] = derived.epsilon_clamped;
        j["eps_v"] = derived.eps_v;
        j["eps_u"] = derived.eps_u;
        j["zeta"] = derived.zeta;
        j["delta_v"] = derived.delta_v;
        j["delta_u"] = derived.delta_u;
        j["eta"] = derived.eta;
        j["gamma"] = derived.gamma;
        j["projections"] = derived.s;
        j["votes"] = derived.votes;
        std::cout << j.dump(2) << "\n";
        return kExitOk;
    }

    try {
        const SampledMatrixXd sm(dense);
        const auto report = fas_run(sm, cfg);
        json j = report_to_json(report);
        j["status"] = "ok";
        write_json(f.output, j);
        write_json(f.output + ".manifest.json",
                   make_manifest("solve", f.input, f.output, f.seed,
                                 {{"rank", f.rank},
                                  {"kappa", f.kappa},
                                  {"delta", f.delta},
                                  {"epsilon", f.epsilon},
                                  {"projections", f.projections},
                                  {"votes", f.votes},
                                  {"coverage_alpha", f.coverage_alpha},
                                  {"fkv_c", f.fkv_c},
                                  {"sample_cap", f.sample_cap},
                                  {"live", f.live}}));
        if (f.verbose) {
            std::uint64_t proposed = 0, accepted = 0;
            for (const auto& rec : report.projections) {
                proposed += rec.proposals;
                accepted += rec.accepted;
            }
            std::cerr << "accesses: sketchV=" << report.telemetry.sketch_v_accesses
                      << " sketchU=" << report.telemetry.sketch_u_accesses
                      << " estimate=" << report.telemetry.estimate_accesses
                      << " projections=" << report.telemetry.projection_accesses << "\n";
            std::cerr << "rejection acceptance rate: "
                      << (proposed ? static_cast<double>(accepted) / static_cast<double>(proposed)
                                   : 0.0)
                      << " over " << proposed << " proposals\n";
        }
        std::cout << "anchors:";
        for (const Index a : report.anchors) std::cout << " " << a;
        std::cout << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        json j;
        j["status"] = "failed";
        j["error"] = e.what();
        write_json(f.output, j);
        std::cerr << "solver failure: " << e.what() << "\n";
        return kExitSolver;
    }
}

int cmd_baseline(const std::string& input, const std::string& output, const std::string& method,
                 Index rank, Index projections, std::uint64_t seed) {
    const MatrixXd dense = read_matrix_auto(input);
    json j;
    j["m"] = dense.rows();
    j["n"] = dense.cols();
    j["method"] = method;
    j["seed"] = seed;
    try {
        if (method == "spa") {
            const auto result = spa(dense, rank);
            std::vector<Index> sorted = result.indices;
            std::sort(sorted.begin(), sorted.end());
            j["anchors"] = sorted;
            j["selection_order"] = result.indices;
            j["complete"] = result.complete;
        } else {  // exact-dca
            const Index s = projections > 0 ? projections : required_projections(rank, 1.0);
            Rng rng = derive_rng(seed);
            j["anchors"] = exact_dca(dense, rank, s, rng);
            j["projections"] = s;
        }
    } catch (const std::exception& e) {
        j["status"] = "failed";
        j["error"] = e.what();
        write_json(output, j);
        std::cerr << "baseline failure: " << e.what() << "\n";
        return kExitSolver;
    }
    j["status"] = "ok";
    write_json(output, j);
    write_json(output + ".manifest.json",
               make_manifest("baseline", input, output, seed,
                             {{"method", method}, {"rank", rank}, {"projections", projections}}));
    std::cout << "anchors:";
    for (const auto& a : j["anchors"]) std::cout << " " << a.get<Index>();
    std::cout << "\n";
    return kExitOk;
}

int cmd_bench(const std::string& m_grid, Index n, Index rank, int trials, double margin,
              double kappa_target, double kappa, std::uint64_t seed, Index sketch_rows,
              double epsilon, std::uint64_t sample_cap, const std::string& output) {
    std::vector<Index> ms;
    std::stringstream ss(m_grid);
    std::string cell;
    while (std::getline(ss, cell, ','))
        if (!cell.empty()) ms.push_back(static_cast<Index>(std::stoll(cell)));

    std::ofstream out(output);
    if (!out) throw std::runtime_error("cannot write " + output);
    out << "m,n,k,trials,recovery_rate,mean_wall_ms,mean_total_accesses,mean_sketch_accesses,"
           "mean_estimate_accesses,mean_projection_accesses\n";
    for (const Index m : ms) {
        double wall_sum = 0;
        double acc_sum = 0, sk_sum = 0, est_sum = 0, proj_sum = 0;
        int recovered = 0;
        for (int t = 0; t < trials; ++t) {
            const std::uint64_t s = seed + static_cast<std::uint64_t>(t) * 7919u +
                                    static_cast<std::uint64_t>(m) * 104729u;
            const auto inst = generate<double>(rank, m, n, kappa_target, margin, s);
            const SampledMatrixXd sm(inst.a);
            FasConfig cfg;
            cfg.rank = rank;
            cfg.kappa = kappa;
            cfg.seed = s;
            cfg.epsilon = epsilon;  // fixed across the grid so the surrogate is comparable
            cfg.materialize_sketches = false;  // live mode: dimension-independent accesses
            cfg.product_sample_cap = sample_cap;
            cfg.norm_estimate_samples = 2048;
            // pin p at sketch_rows regardless of m (the derived eps_v would
            // otherwise cap p at m and the access counts would scale with it)
            const auto derived = derive_fas_params(cfg, m);
            cfg.fkv_sample_factor =
                sample_factor_for_target<double>(sketch_rows, rank, derived.eps_v, derived.delta_v);
            const auto t0 = std::chrono::steady_clock::now();
            const auto report = fas_run(sm, cfg);
            wall_sum += std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
            acc_sum += static_cast<double>(report.telemetry.total_accesses);
            sk_sum += static_cast<double>(report.telemetry.sketch_v_accesses +
                                          report.telemetry.sketch_u_accesses);
            est_sum += static_cast<double>(report.telemetry.estimate_accesses);
            proj_sum += static_cast<double>(report.telemetry.projection_accesses);
            if (report.anchors == inst.anchors) ++recovered;
        }
        const double inv = trials > 0 ? 1.0 / trials : 0.0;
        out << m << "," << n << "," << rank << "," << trials << "," << recovered * inv << ","
            << wall_sum * inv << "," << acc_sum * inv << "," << sk_sum * inv << ","
            << est_sum * inv << "," << proj_sum * inv << "\n";
    }
    out.close();
    write_json(output + ".manifest.json",
               make_manifest("bench", "", output, seed,
                             {{"m_grid", m_grid},
                              {"n", n},
                              {"rank", rank},
                              {"trials", trials},
                              {"sketch_rows", sketch_rows},
                              {"epsilon", epsilon},
                              {"sample_cap", sample_cap}}));
    std::cout << "wrote " << output << "\n";
    return kExitOk;
}

int cmd_index(const std::string& input, const std::string& output, const std::string& side,
              Index rank, double epsilon, double delta, double fkv_c, std::uint64_t seed) {
    const MatrixXd dense = read_matrix_auto(input);
    const SampledMatrixXd sm(dense);
    FkvOptions<double> opts;
    opts.sample_factor = fkv_c;
    Rng rng = derive_rng(seed);
    const auto sketch = side == "left" ? fkv_sketch_left(sm, rank, epsilon, delta, rng, opts)
                                       : fkv_sketch(sm, rank, epsilon, delta, rng, opts);
    write_json(output, sketch_to_json(sketch, seed));
    write_json(output + ".manifest.json",
               make_manifest("index", input, output, seed,
                             {{"side", side}, {"rank", rank}, {"epsilon", epsilon},
                              {"delta", delta}, {"fkv_c", fkv_c}}));
    std::cout << "wrote " << output << " (k'=" << sketch.num_columns() << ", p=" << sketch.p
              << ", exact_rows=" << sketch.exact_rows << ")\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"anchor detection for separable nonnegative matrices via length-squared sampling"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "write a synthetic separable instance");
    Index g_k = 3, g_m = 200, g_n = 100;
    double g_kappa = 5.0, g_margin = 0.2;
    std::uint64_t g_seed = 0;
    std::string g_out = "instance";
    gen->add_option("--rank,-k", g_k, "number of anchors");
    gen->add_option("-m", g_m, "rows");
    gen->add_option("-n", g_n, "columns");
    gen->add_option("--kappa-target", g_kappa, "condition number to shape toward");
    gen->add_option("--margin", g_margin, "separation margin in (0,1)");
    gen->add_option("--seed", g_seed, "rng seed");
    gen->add_option("--output,-o", g_out, "output prefix (.mtx/.json)");

    // solve
    auto* solve = app.add_subcommand("solve", "run the fast-anchors-seeking pipeline");
    SolveFlags sf;
    solve->add_option("--input,-i", sf.input, "matrix file (.mtx/.mm/.csv/.ansk)")->required();
    solve->add_option("--rank,-k", sf.rank, "rank / anchor count")->required();
    solve->add_option("--kappa", sf.kappa, "condition-number bound");
    solve->add_option("--delta", sf.delta, "total failure probability");
    solve->add_option("--epsilon", sf.epsilon, "override the derived TV budget");
    solve->add_option("--projections,-s", sf.projections, "override the projection count");
    solve->add_option("--votes,-N", sf.votes, "override samples per projection");
    solve->add_option("--coverage-alpha", sf.coverage_alpha, "coverage constant in s = (3/a) k ln k");
    solve->add_option("--seed", sf.seed, "rng seed");
    solve->add_option("--fkv-c", sf.fkv_c, "sketch sample-size factor");
    solve->add_option("--sample-cap", sf.sample_cap, "per-entry cap for the product estimate");
    solve->add_flag("--live", sf.live, "no dense sketch caches (dimension-independent accesses)");
    solve->add_flag("--dry-run", sf.dry_run, "print derived parameters and exit");
    solve->add_flag("--verbose", sf.verbose, "diagnostics to stderr");
    solve->add_option("--output,-o", sf.output, "report path");

    // baseline
    auto* base = app.add_subcommand("baseline", "dense reference solvers");
    std::string b_in, b_out = "baseline.json", b_method = "spa";
    Index b_k = 3, b_s = 0;
    std::uint64_t b_seed = 0;
    base->add_option("--input,-i", b_in, "matrix file")->required();
    base->add_option("--rank,-k", b_k, "anchor count")->required();
    base->add_option("--method", b_method, "spa | exact-dca")
        ->check(CLI::IsMember({"spa", "exact-dca"}));
    base->add_option("--projections,-s", b_s, "projections for exact-dca");
    base->add_option("--seed", b_seed, "rng seed");
    base->add_option("--output,-o", b_out, "report path");

    // bench
    auto* bench = app.add_subcommand("bench", "access-count scaling table");
    std::string be_grid = "250,500,1000,2000", be_out = "bench.csv";
    Index be_n = 100, be_k = 4;
    int be_trials = 3;
    double be_margin = 0.2, be_kt = 5.0, be_kappa = 10.0, be_eps = 0.5;
    Index be_rows = 128;
    std::uint64_t be_seed = 0, be_cap = 50'000;
    bench->add_option("--m-grid", be_grid, "comma-separated row counts");
    bench->add_option("-n", be_n, "columns (fixed)");
    bench->add_option("--rank,-k", be_k, "rank (fixed)");
    bench->add_option("--trials", be_trials, "instances per cell");
    bench->add_option("--margin", be_margin, "instance margin");
    bench->add_option("--kappa-target", be_kt, "instance kappa target");
    bench->add_option("--kappa", be_kappa, "kappa bound passed to the solver");
    bench->add_option("--seed", be_seed, "base seed");
    bench->add_option("--sketch-rows", be_rows, "pinned sketch sample count p (dimension independent)");
    bench->add_option("--epsilon", be_eps, "fixed TV budget across the grid");
    bench->add_option("--sample-cap", be_cap, "per-entry cap for the product estimate");
    bench->add_option("--output,-o", be_out, "CSV path");

    // index
    auto* index = app.add_subcommand("index", "write an FKV sketch description as JSON");
    std::string i_in, i_out = "sketch.json", i_side = "right";
    Index i_k = 3;
    double i_eps = 0.1, i_delta = 0.1, i_c = 1.0;
    std::uint64_t i_seed = 0;
    index->add_option("--input,-i", i_in, "matrix file")->required();
    index->add_option("--rank,-k", i_k, "sketch rank")->required();
    index->add_option("--side", i_side, "right (row space) | left (column space)")
        ->check(CLI::IsMember({"right", "left"}));
    index->add_option("--epsilon", i_eps, "sketch tolerance");
    index->add_option("--delta", i_delta, "failure probability");
    index->add_option("--fkv-c", i_c, "sample-size factor");
    index->add_option("--seed", i_seed, "rng seed");
    index->add_option("--output,-o", i_out, "sketch JSON path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_generate(g_k, g_m, g_n, g_kappa, g_margin, g_seed, g_out);
        if (solve->parsed()) return cmd_solve(sf);
        if (base->parsed()) return cmd_baseline(b_in, b_out, b_method, b_k, b_s, b_seed);
        if (bench->parsed())
            return cmd_bench(be_grid, be_n, be_k, be_trials, be_margin, be_kt, be_kappa, be_seed,
                             be_rows, be_eps, be_cap, be_out);
        if (index->parsed()) return cmd_index(i_in, i_out, i_side, i_k, i_eps, i_delta, i_c, i_seed);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSolver;
    }
    return kExitUsage;
}
