#pragma once

// End-to-end experiment: grid approximation, harmonic measures, decoration,
// Shabat solve with the decorated geometry as the hint, tracing, and
// similarity alignment against the input continuum.

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include "truetree/balancer.hpp"
#include "truetree/geom_tree.hpp"
#include "truetree/grid_approx.hpp"
#include "truetree/harmonic.hpp"
#include "truetree/json_io.hpp"
#include "truetree/solve.hpp"
#include "truetree/svg.hpp"
#include "truetree/tracer.hpp"

namespace truetree {

struct PipelineOptions {
    int depth = 3;
    int delta_exp = 0;  // 0 = default depth + 4
    std::uint64_t walkers = 200000;
    std::uint64_t seed = 1;
    int threads = 0;
    std::uint64_t max_cells = 60000;
    // the true form of the decorated tree is solved when its plane tree stays
    // under this degree; past it the grid tree is solved instead (the
    // decorated degree grows exponentially with the measure range)
    int solve_degree_budget = 150;
    // floors the side measures at max/2^range before decorating, which keeps
    // the dyadic height range (and the tooth count) desk-sized
    int measure_floor_range = 6;
    bool allow_deep = false;  // lift the depth <= 5 guard
    std::string outdir;       // artifacts are written when nonempty
};

struct PipelineReport {
    std::string input_descriptor;
    int depth = 0;
    int delta_exp = 0;
    std::uint64_t walkers = 0;
    std::uint64_t seed = 0;
    int tree_edges = 0;
    int decorated_edges = 0;
    int degree = 0;
    std::string solve_target;  // "decorated" or "grid"
    int newton_iterations = 0;
    int solve_retries = 0;
    int continuation_steps = 0;
    double residual = 0;
    BalanceComparison balance;
    double aligned_distance = 0;
    double stage_seconds[6] = {0, 0, 0, 0, 0, 0};  // approx, measure, decorate, solve, trace, align
};

inline json pipeline_report_to_json(const PipelineReport& r) {
    json j;
    j["input"] = r.input_descriptor;
    j["depth"] = r.depth;
    j["delta_exp"] = r.delta_exp;
    j["walkers"] = r.walkers;
    j["seed"] = r.seed;
    j["tree_edges"] = r.tree_edges;
    j["decorated_edges"] = r.decorated_edges;
    j["degree"] = r.degree;
    j["solve_target"] = r.solve_target;
    j["newton_iterations"] = r.newton_iterations;
    j["solve_retries"] = r.solve_retries;
    j["continuation_steps"] = r.continuation_steps;
    j["residual"] = r.residual;
    j["balance"] = {{"before_max_side_ratio_dev", r.balance.before.max_side_ratio_dev},
                    {"after_max_side_ratio_dev", r.balance.after.max_side_ratio_dev},
                    {"before_edge_cv", r.balance.before_cv},
                    {"after_group_cv", r.balance.after_cv},
                    {"side_ratio_improved", r.balance.side_ratio_improved}};
    j["aligned_hausdorff"] = r.aligned_distance;
    j["stage_seconds"] = {{"approximate", r.stage_seconds[0]}, {"measure", r.stage_seconds[1]},
                          {"decorate", r.stage_seconds[2]},   {"solve", r.stage_seconds[3]},
                          {"trace", r.stage_seconds[4]},      {"align", r.stage_seconds[5]}};
    return j;
}

// Lifts every side measure to at least max_side/2^range and renormalizes.
// Shielded grid-tree sides can carry measures exponentially small in the
// depth; without a floor the dyadic height range would explode the tooth
// count far past anything solvable at desk scale.
inline MeasureTable floor_measures(MeasureTable t, int range) {
    double mx = 0;
    for (const auto& pair : t.entries)
        for (const auto& s : pair) mx = std::max(mx, s.measure);
    double floor_value = mx / std::ldexp(1.0, range);
    double total = 0;
    for (auto& pair : t.entries)
        for (auto& s : pair) {
            s.measure = std::max(s.measure, floor_value);
            total += s.measure;
        }
    for (auto& pair : t.entries)
        for (auto& s : pair) s.measure /= total;
    return t;
}

inline PipelineReport run_pipeline(const std::vector<Complex>& continuum, PipelineOptions opts,
                                   std::string descriptor = "points") {
    if (opts.depth > 5 && !opts.allow_deep)
        throw resource_error("pipeline depth capped at 5 (override with allow_deep)");
    if (opts.delta_exp <= 0) opts.delta_exp = opts.depth + 4;

    PipelineReport report;
    report.input_descriptor = std::move(descriptor);
    report.depth = opts.depth;
    report.delta_exp = opts.delta_exp;
    report.walkers = opts.walkers;
    report.seed = opts.seed;

    namespace chr = std::chrono;
    auto tick = [start = chr::steady_clock::now()]() mutable {
        auto now = chr::steady_clock::now();
        double s = chr::duration<double>(now - start).count();
        start = now;
        return s;
    };

    GridTree grid = approximate(continuum, opts.depth);
    report.tree_edges = static_cast<int>(grid.geom.edges.size());
    report.stage_seconds[0] = tick();

    WalkConfig cfg;
    cfg.seed = opts.seed;
    cfg.threads = opts.threads;
    MeasureTable before = estimate_measures(grid.geom, cfg, opts.walkers);
    report.stage_seconds[1] = tick();

    ToothPlanOptions topts;
    topts.delta_exp = opts.delta_exp - opts.depth;  // rescaled to the unit grid
    topts.max_cells = opts.max_cells;
    MeasureTable floored = floor_measures(before, opts.measure_floor_range);
    DecoratedTree decorated = decorate(grid.geom, floored, topts);
    report.decorated_edges = static_cast<int>(decorated.geom.edges.size());

    WalkConfig cfg_after = cfg;
    cfg_after.seed = opts.seed + 1;
    MeasureTable after = estimate_measures(decorated.geom, cfg_after, opts.walkers);
    report.balance = balance_report(before, after, decorated);
    report.stage_seconds[2] = tick();

    // solve the decorated tree's true form when it is desk-sized, else the
    // grid tree's
    const GeomTree* target_geom = &decorated.geom;
    report.solve_target = "decorated";
    if (report.decorated_edges > opts.solve_degree_budget) {
        target_geom = &grid.geom;
        report.solve_target = "grid";
    }
    report.degree = static_cast<int>(target_geom->edges.size());

    SolveOptions sopts;
    sopts.retry_seed = opts.seed;
    SolveReport sreport;
    ShabatPolynomial poly = solve(derive_rotation_system(*target_geom), target_geom, sopts, &sreport);
    report.newton_iterations = sreport.newton_iterations;
    report.solve_retries = sreport.retries;
    report.continuation_steps = sreport.continuation_steps;
    report.residual = poly.residual;
    report.stage_seconds[3] = tick();

    TracedTree traced = trace_tree(poly);
    report.stage_seconds[4] = tick();

    AlignResult align = similarity_align(traced.geom, continuum);
    report.aligned_distance = align.distance;
    report.stage_seconds[5] = tick();

    if (!opts.outdir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(opts.outdir);
        auto path = [&](const char* name) { return (fs::path(opts.outdir) / name).string(); };
        save_json(path("tree.json"), geom_to_json(grid.geom));
        save_json(path("measures.json"), measures_to_json(before));
        save_json(path("decorated.json"), geom_to_json(decorated.geom));
        save_json(path("decorated.plan.json"), plan_to_json(decorated.plan));
        save_json(path("measures_decorated.json"), measures_to_json(after));
        save_json(path("poly.json"), poly_to_json(poly));
        save_json(path("geom.json"), geom_to_json(traced.geom));
        GeomTree aligned = traced.geom;
        for (auto& v : aligned.vertices) v = align.map(v);
        for (auto& e : aligned.edges)
            for (auto& p : e.polyline) p = align.map(p);
        std::vector<SvgLayer> layers;
        layers.push_back({nullptr, &continuum, "continuum", "#888888", 0.5});
        layers.push_back({&grid.geom, nullptr, "grid_tree", "#1f77b4", 0.35});
        layers.push_back({&decorated.geom, nullptr, "decorated", "#2ca02c", 0.2});
        layers.push_back({&aligned, nullptr, "true_tree", "#d62728", 0.35});
        save_text(path("overlay.svg"), render_svg(layers));
        save_json(path("report.json"), pipeline_report_to_json(report));
    }
    return report;
}

// ----- catalog of all small true trees -----

struct CatalogEntry {
    std::string code;
    ShabatPolynomial polynomial;
    TracedTree traced;
    bool solved = false;
    std::string failure;
};

inline std::vector<CatalogEntry> catalog(int max_edges, SolveOptions opts = {}) {
    if (max_edges > 8) throw resource_error("catalog capped at 8 edges");
    std::vector<CatalogEntry> out;
    for (int n = 1; n <= max_edges; ++n)
        for (const auto& tree : enumerate_plane_trees(n)) {
            CatalogEntry entry;
            entry.code = canonical_code(tree);
            try {
                entry.polynomial = normalize(solve(tree, nullptr, opts));
                entry.traced = trace_tree(entry.polynomial);
                entry.solved = true;
            } catch (const std::exception& e) {
                entry.failure = e.what();
            }
            out.push_back(std::move(entry));
        }
    return out;
}

}  // namespace truetree
