#pragma once

// Monte Carlo harmonic measure from infinity on an embedded tree, attributed
// per edge and per side. Walkers run walk-on-spheres inside the launch circle;
// excursions outside it re-enter through the exact Poisson kernel of the disk
// exterior, so the estimator has no far-field truncation bias.

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <thread>
#include <vector>

#include "truetree/errors.hpp"
#include "truetree/geom_tree.hpp"

namespace truetree {

struct WalkConfig {
    double launch_factor = 64.0;  // launch radius = factor * circumscribed radius
    double stop_tol = -1;         // termination distance; default 1e-6 * diameter
    double vert_factor = 10.0;    // vertex ambiguity radius = factor * stop_tol
    long max_steps = 1000000;
    int bins = 64;
    std::uint64_t seed = 1;
    int threads = 0;              // 0 = hardware concurrency
    bool record_positions = false;
};

struct SideStats {
    std::uint64_t hits = 0;
    double measure = 0;
    double std_error = 0;
    std::vector<std::uint64_t> histogram;
    std::vector<double> positions;  // raw hit parameters, only when recorded
};

struct MeasureTable {
    int edge_count = 0;
    std::uint64_t walkers = 0;
    std::uint64_t discarded = 0;
    std::uint64_t seed = 0;
    int bins = 64;
    std::vector<std::array<SideStats, 2>> entries;  // [edge][side]; 0 = left, 1 = right

    const SideStats& at(int edge, int side) const { return entries[edge][side]; }
};

// Piecewise-linear cumulative distribution of hit positions along one edge
// side, normalized to the side's total measure.
struct EdgeSideCDF {
    double total = 0;
    std::vector<double> x;  // bin boundaries in [0,1]
    std::vector<double> f;  // cumulative measure, f.front()=0, f.back()=total

    double value(double pos) const {
        if (pos <= x.front()) return 0;
        if (pos >= x.back()) return total;
        auto it = std::upper_bound(x.begin(), x.end(), pos);
        std::size_t i = it - x.begin();
        double t = (pos - x[i - 1]) / (x[i] - x[i - 1]);
        return f[i - 1] + t * (f[i] - f[i - 1]);
    }

    // position whose relative cumulative mass is frac in [0,1]
    double inverse(double frac) const {
        double target = frac * total;
        if (target <= 0) return x.front();
        if (target >= total) return x.back();
        auto it = std::lower_bound(f.begin(), f.end(), target);
        std::size_t i = it - f.begin();
        if (i == 0) return x.front();
        double span = f[i] - f[i - 1];
        double t = span > 0 ? (target - f[i - 1]) / span : 1.0;
        return x[i - 1] + t * (x[i] - x[i - 1]);
    }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Deterministic per-walker stream; cheap and fully pinned down.
struct WalkerRng {
    std::uint64_t s0, s1;
    WalkerRng(std::uint64_t seed, std::uint64_t idx) {
        s0 = splitmix64(seed ^ (idx * 0xA0761D6478BD642Full));
        s1 = splitmix64(s0 ^ idx);
        if (s1 == 0) s1 = 0x9E3779B97F4A7C15ull;
    }
    std::uint64_t next() {
        std::uint64_t x = s0, y = s1;
        s0 = y;
        x ^= x << 23;
        s1 = x ^ y ^ (x >> 17) ^ (y >> 26);
        return s1 + y;
    }
    double uniform() { return double(next() >> 11) * 0x1p-53; }
};

struct WalkOutcome {
    std::int32_t edge = -1;  // -1 = discarded
    std::int32_t side = 0;
    double param = 0;
};

struct Launch {
    Complex center;
    double radius;  // launch circle radius R
};

inline Launch launch_circle(const GeomTree& tree, double factor) {
    Complex lo, hi;
    tree.bounding_box(lo, hi);
    Complex c = 0.5 * (lo + hi);
    double rc = 0;
    for (const auto& e : tree.edges)
        for (Complex p : e.polyline) rc = std::max(rc, std::abs(p - c));
    for (Complex p : tree.vertices) rc = std::max(rc, std::abs(p - c));
    if (rc <= 0) throw input_error("tree has zero extent");
    return {c, factor * rc};
}

// First re-entry angle offset for the exterior of the disk of radius R, from
// distance s > R: exact Poisson kernel sampling.
inline double exterior_reentry_offset(double r_ratio, double u) {
    double a = (1.0 - r_ratio) / (1.0 + r_ratio);
    return 2.0 * std::atan(a * std::tan(std::numbers::pi * (u - 0.5)));
}

inline WalkOutcome walk_one(const SegmentIndex& index, const Launch& L, const WalkConfig& cfg,
                            double stop, const GeomTree& tree, std::uint64_t idx) {
    WalkerRng rng(cfg.seed, idx);
    Complex z = L.center + std::polar(L.radius, 2 * std::numbers::pi * rng.uniform());
    double cur_stop = stop;
    int escalations = 0;
    for (long step = 0; step < cfg.max_steps; ++step) {
        double s = std::abs(z - L.center);
        if (s > L.radius * (1 + 1e-12)) {
            double t = exterior_reentry_offset(L.radius / s, rng.uniform());
            z = L.center + std::polar(L.radius, std::arg(z - L.center) + t);
            continue;
        }
        double lb = index.bbox_lower_bound(z);
        if (lb > 1e3 * cur_stop && lb > 0.01 * L.radius) {
            z += std::polar(lb, 2 * std::numbers::pi * rng.uniform());
            continue;
        }
        NearestSegment hit = index.query(z);
        if (hit.dist > cur_stop) {
            z += std::polar(hit.dist, 2 * std::numbers::pi * rng.uniform());
            continue;
        }
        // near-vertex hits are re-dispatched with a tighter stop distance
        const auto& e = tree.edges[hit.edge];
        double dva = std::abs(hit.foot - tree.vertices[e.from]);
        double dvb = std::abs(hit.foot - tree.vertices[e.to]);
        if (std::min(dva, dvb) <= cfg.vert_factor * cur_stop && escalations < 3) {
            ++escalations;
            cur_stop *= 0.1;
            continue;
        }
        const SegmentRecord& rec = index.segments()[hit.segment];
        double cr = cross(rec.b - rec.a, z - hit.foot);
        WalkOutcome out;
        out.edge = hit.edge;
        out.side = cr > 0 ? 0 : 1;
        out.param = hit.param;
        return out;
    }
    return {};  // discarded
}

}  // namespace detail

inline SegmentIndex build_index(const GeomTree& tree) { return SegmentIndex(flatten_segments(tree)); }

// Launches `walkers` independent walkers and aggregates hits per (edge, side).
// Deterministic given (seed, walkers), independent of thread scheduling: the
// outcome of walker i depends only on (seed, i) and the reduction is ordered.
inline MeasureTable estimate_measures(const GeomTree& tree, const WalkConfig& cfg,
                                      std::uint64_t walkers) {
    if (walkers < 1) throw input_error("walker count must be >= 1");
    if (tree.edges.empty()) throw input_error("tree has no edges");
    SegmentIndex index = build_index(tree);
    detail::Launch L = detail::launch_circle(tree, cfg.launch_factor);
    double diameter = tree.diameter();
    double stop = cfg.stop_tol > 0 ? cfg.stop_tol : 1e-6 * diameter;

    std::vector<detail::WalkOutcome> outcomes(walkers);
    int nthreads = cfg.threads > 0 ? cfg.threads
                                   : std::max(1u, std::thread::hardware_concurrency());
    nthreads = std::min<int>(nthreads, 16);
    {
        std::atomic<std::uint64_t> next{0};
        const std::uint64_t chunk = 4096;
        auto worker = [&] {
            for (;;) {
                std::uint64_t lo = next.fetch_add(chunk);
                if (lo >= walkers) return;
                std::uint64_t hi = std::min(walkers, lo + chunk);
                for (std::uint64_t i = lo; i < hi; ++i)
                    outcomes[i] = detail::walk_one(index, L, cfg, stop, tree, i);
            }
        };
        std::vector<std::thread> pool;
        for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
        worker();
        for (auto& th : pool) th.join();
    }

    MeasureTable table;
    table.edge_count = static_cast<int>(tree.edges.size());
    table.walkers = walkers;
    table.seed = cfg.seed;
    table.bins = cfg.bins;
    table.entries.assign(table.edge_count, {});
    for (auto& pair : table.entries)
        for (auto& side : pair) side.histogram.assign(cfg.bins, 0);

    for (const auto& o : outcomes) {
        if (o.edge < 0) {
            ++table.discarded;
            continue;
        }
        SideStats& s = table.entries[o.edge][o.side];
        ++s.hits;
        int b = std::min(cfg.bins - 1, static_cast<int>(o.param * cfg.bins));
        ++s.histogram[b];
        if (cfg.record_positions) s.positions.push_back(o.param);
    }
    double total = double(walkers - table.discarded);
    if (total <= 0) throw numerical_error("all walkers discarded");
    for (auto& pair : table.entries)
        for (auto& s : pair) {
            s.measure = double(s.hits) / total;
            s.std_error = std::sqrt(std::max(0.0, s.measure * (1 - s.measure) / total));
        }
    return table;
}

inline EdgeSideCDF estimate_cumulative(const MeasureTable& table, int edge, int side) {
    if (edge < 0 || edge >= table.edge_count || side < 0 || side > 1)
        throw input_error("edge/side out of range");
    const SideStats& s = table.entries[edge][side];
    if (s.hits < 100) throw numerical_error("insufficient statistics for cumulative estimate");
    EdgeSideCDF cdf;
    cdf.total = s.measure;
    int b = static_cast<int>(s.histogram.size());
    cdf.x.resize(b + 1);
    cdf.f.resize(b + 1);
    double total_hits = double(s.hits);
    double acc = 0;
    cdf.x[0] = 0;
    cdf.f[0] = 0;
    for (int i = 0; i < b; ++i) {
        acc += double(s.histogram[i]);
        cdf.x[i + 1] = double(i + 1) / b;
        cdf.f[i + 1] = s.measure * acc / total_hits;
    }
    return cdf;
}

// Aggregate balance statistics; side ratios use only edges where both sides
// carry at least min_hits hits so the ratio estimate is meaningful.
struct BalanceSummary {
    double max_side_ratio_dev = 0;  // max over edges of max(L,R)/min(L,R) - 1
    int ratio_edges_used = 0;
    double edge_measure_cv = 0;     // coefficient of variation of edge totals
    double min_edge_measure = 0;
    double max_edge_measure = 0;
    double total_measure = 0;
};

inline BalanceSummary summarize(const MeasureTable& table, std::uint64_t min_hits = 25) {
    BalanceSummary out;
    std::vector<double> edge_totals;
    for (const auto& pair : table.entries) {
        double L = pair[0].measure, R = pair[1].measure;
        edge_totals.push_back(L + R);
        out.total_measure += L + R;
        if (pair[0].hits >= min_hits && pair[1].hits >= min_hits) {
            double dev = std::max(L, R) / std::min(L, R) - 1.0;
            out.max_side_ratio_dev = std::max(out.max_side_ratio_dev, dev);
            ++out.ratio_edges_used;
        }
    }
    if (edge_totals.empty()) return out;
    out.min_edge_measure = *std::min_element(edge_totals.begin(), edge_totals.end());
    out.max_edge_measure = *std::max_element(edge_totals.begin(), edge_totals.end());
    double mean = out.total_measure / edge_totals.size();
    double var = 0;
    for (double m : edge_totals) var += (m - mean) * (m - mean);
    var /= edge_totals.size();
    if (mean > 0) out.edge_measure_cv = std::sqrt(var) / mean;
    return out;
}

// Kolmogorov-Smirnov distance between sorted sample positions and a reference
// CDF given as a callable.
template <class F>
double ks_distance(std::vector<double> samples, F&& reference_cdf) {
    if (samples.empty()) throw input_error("KS distance of empty sample");
    std::sort(samples.begin(), samples.end());
    double n = double(samples.size());
    double worst = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double fx = reference_cdf(samples[i]);
        worst = std::max(worst, std::abs(double(i + 1) / n - fx));
        worst = std::max(worst, std::abs(double(i) / n - fx));
    }
    return worst;
}

}  // namespace truetree
