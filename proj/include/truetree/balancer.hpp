#pragma once

// The circle-side of the construction: boundary-walk layout of measured side
// intervals, the dyadic subdivision with its four certified invariants, the
// height assignment with facts (1)-(4), and the decorated tree T' whose
// perpendicular teeth realize the walls of the rectangle/trapezoid collar.
//
// All interval arithmetic is exact: positions are integer multiples of 2^-G.

#include <array>
#include <climits>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "truetree/errors.hpp"
#include "truetree/geom_tree.hpp"
#include "truetree/harmonic.hpp"
#include "truetree/plane_tree.hpp"

namespace truetree {

// one traversal step of the (single) face of the tree: each edge is walked
// twice, once per side
struct WalkStep {
    int edge = -1;
    int side = 0;       // side of the stored edge orientation hit by this pass
    bool forward = true;  // true: from -> to
    int end_vertex = -1;  // corner vertex at the end of the step
};

// With counterclockwise rotations and the successor rule, the walk passes
// along the right side of each directed edge.
inline std::vector<WalkStep> boundary_walk(const GeomTree& tree) {
    PlaneTree pt = derive_rotation_system(tree);
    std::map<std::pair<int, int>, int> edge_of;
    for (int e = 0; e < static_cast<int>(tree.edges.size()); ++e) {
        edge_of[{tree.edges[e].from, tree.edges[e].to}] = e;
        edge_of[{tree.edges[e].to, tree.edges[e].from}] = e;
    }
    std::vector<WalkStep> walk;
    int u = 0, w = pt.rotations[0][0];
    int n2 = 2 * pt.edge_count();
    for (int step = 0; step < n2; ++step) {
        WalkStep s;
        s.edge = edge_of.at({u, w});
        s.forward = tree.edges[s.edge].from == u;
        s.side = s.forward ? 1 : 0;  // right of travel
        s.end_vertex = w;
        walk.push_back(s);
        const auto& rot = pt.rotations[w];
        int back = 0;
        for (int i = 0; i < static_cast<int>(rot.size()); ++i)
            if (rot[i] == u) back = i;
        u = w;
        w = rot[(back + 1) % rot.size()];
    }
    if (u != 0 || w != pt.rotations[0][0]) throw numerical_error("boundary walk did not close");
    return walk;
}

// The initial circle partition E: one interval per (edge, side) in boundary
// walk order, lengths proportional to the measured side measures.
struct InitialPartition {
    struct Item {
        int edge;
        int side;
        bool forward;
        double length;    // normalized, sums to 1
        int end_vertex;   // vertex preimage mark at the right endpoint
    };
    std::vector<Item> items;
};

inline InitialPartition circle_layout(const MeasureTable& table, const GeomTree& tree) {
    if (table.edge_count != static_cast<int>(tree.edges.size()))
        throw input_error("measure table does not match the tree");
    InitialPartition part;
    double total = 0;
    for (const WalkStep& s : boundary_walk(tree)) {
        double m = table.at(s.edge, s.side).measure;
        if (m <= 0) throw input_error("zero-measure side (undersampled walk)");
        part.items.push_back({s.edge, s.side, s.forward, m, s.end_vertex});
        total += m;
    }
    for (auto& item : part.items) item.length /= total;
    return part;
}

// ---------------------------------------------------------------------------
// dyadic subdivision (the proof of the intervals lemma, pass by pass)

struct IntervalSet {
    int resolution = 0;  // positions in units of 2^-resolution
    struct Interval {
        std::uint64_t start;
        std::uint64_t length;  // power of two
        int item;              // originating InitialPartition item
    };
    std::vector<Interval> intervals;       // tiles the circle in order
    std::vector<std::uint64_t> marks;      // snapped vertex-preimage positions
    std::vector<int> mark_vertex;
    int min_length_exp = 0;  // smallest length = 2^-min... (the paper's n)
    int spread = 0;          // largest length = 2^{spread} * smallest

    int length_exp(std::size_t i) const {
        std::uint64_t len = intervals[i].length;
        int e = resolution;
        while (len > 1) {
            len >>= 1;
            --e;
        }
        return e;
    }
};

namespace detail {

inline void certify_interval_set(const IntervalSet& s) {
    const auto& iv = s.intervals;
    if (iv.empty()) throw numerical_error("empty interval set");
    std::uint64_t sum = 0;
    for (const auto& i : iv) {
        if (i.length == 0 || (i.length & (i.length - 1)) != 0)
            throw numerical_error("interval length is not a power of two");
        sum += i.length;
    }
    if (sum != (std::uint64_t(1) << s.resolution))
        throw numerical_error("interval lengths do not sum to the full circle");
    std::size_t m = iv.size();
    for (std::size_t i = 0; i < m; ++i) {
        std::uint64_t a = iv[i].length, b = iv[(i + 1) % m].length;
        if (std::max(a, b) > 2 * std::min(a, b))
            throw numerical_error("adjacent interval lengths differ by more than 2x");
        if (iv[i].length != iv[(i + 1) % m].length && iv[i].length != iv[(i + m - 1) % m].length)
            throw numerical_error("interval has no equal-length neighbor");
    }
    std::set<std::uint64_t> starts;
    for (const auto& i : iv) starts.insert(i.start);
    for (std::size_t k = 0; k < s.marks.size(); ++k) {
        std::uint64_t pos = s.marks[k];
        if (!starts.count(pos % (std::uint64_t(1) << s.resolution)))
            throw numerical_error("mark is not an interval boundary");
        // flanking intervals around the mark have equal lengths
        std::size_t right = 0;
        for (std::size_t i = 0; i < m; ++i)
            if (iv[i].start == pos) right = i;
        std::size_t left = (right + m - 1) % m;
        if (iv[left].length != iv[right].length)
            throw numerical_error("intervals flanking a vertex preimage differ");
    }
}

}  // namespace detail

// Executes the subdivision passes: pre-split to a 2x neighbor ratio, maximal
// dyadic cover under the quarter rule, replacement by unions of dyadic
// pieces, ratio repair, quadrisection, and vertex-pair equalization. All
// IntervalSet invariants are certified before returning.
inline IntervalSet subdivide(const InitialPartition& partition) {
    struct RealIv {
        double start, len;
        int item;
    };
    std::vector<RealIv> E;
    {
        double pos = 0;
        for (int i = 0; i < static_cast<int>(partition.items.size()); ++i) {
            E.push_back({pos, partition.items[i].length, i});
            pos += partition.items[i].length;
        }
    }
    double min_len = 1;
    for (const auto& e : E) min_len = std::min(min_len, e.len);
    if (min_len < std::ldexp(1.0, -36))
        throw resource_error("interval below representable dyadic resolution; coarsen the input");

    // pre-split until adjacent lengths are within a factor of 2 (circular)
    for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t i = 0; i < E.size(); ++i) {
            std::size_t j = (i + 1) % E.size();
            double a = E[i].len, b = E[j].len;
            if (a > 2 * b) {
                E.insert(E.begin() + i + 1, {E[i].start + a / 2, a / 2, E[i].item});
                E[i].len = a / 2;
                changed = true;
                break;
            }
            if (b > 2 * a) {
                E.insert(E.begin() + j + 1, {E[j].start + b / 2, b / 2, E[j].item});
                E[j].len = b / 2;
                changed = true;
                break;
            }
        }
    }
    for (const auto& e : E) min_len = std::min(min_len, e.len);

    // resolution: cover pieces stay >= min_len/16; leave room for the later
    // splitting passes
    int G = 4;
    while (std::ldexp(1.0, -G) > min_len / 64 && G < 52) ++G;
    G += 3;  // exactly-16 split, quadrisection, vertex repair
    if (G > 52) throw resource_error("dyadic resolution overflow; coarsen the input");
    const std::uint64_t ONE = std::uint64_t(1) << G;

    // pass (a): maximal dyadic cover, each piece at most 1/4 of any interval
    // it meets
    struct Piece {
        std::uint64_t start, len;
        int item = -1;
    };
    std::vector<Piece> pieces;
    {
        // the piece is acceptable when it is at most 1/4 as long as every
        // interval it meets (positive-measure overlap, half-open)
        auto quarter_rule = [&](std::uint64_t s, std::uint64_t l) {
            double a = std::ldexp(double(s), -G);
            double b = std::ldexp(double(s + l), -G);
            double plen = std::ldexp(double(l), -G);
            for (const auto& e : E)
                if (e.start < b && a < e.start + e.len && plen > e.len / 4.0) return false;
            return true;
        };
        std::vector<Piece> stack{{0, ONE, -1}};
        while (!stack.empty()) {
            Piece p = stack.back();
            stack.pop_back();
            if (p.len > 1 && !quarter_rule(p.start, p.len)) {
                stack.push_back({p.start + p.len / 2, p.len / 2, -1});
                stack.push_back({p.start, p.len / 2, -1});
            } else {
                pieces.push_back(p);
            }
        }
        std::sort(pieces.begin(), pieces.end(),
                  [](const Piece& a, const Piece& b) { return a.start < b.start; });
    }

    // pass (b): a piece contained in an interval joins it; a piece straddling
    // an interval's left endpoint joins that interval
    for (auto& p : pieces) {
        double a = std::ldexp(double(p.start), -G);
        double b = std::ldexp(double(p.start + p.len), -G);
        int owner = -1;
        for (std::size_t e = 0; e < E.size(); ++e) {
            double l = E[e].start;
            if (a < l && l < b) owner = static_cast<int>(e);  // straddles boundary l
        }
        if (owner < 0) {
            for (std::size_t e = 0; e < E.size(); ++e)
                if (E[e].start <= a && a < E[e].start + E[e].len) owner = static_cast<int>(e);
        }
        if (owner < 0) throw numerical_error("piece assignment failed");
        p.item = owner;
    }

    // group pieces by owner and split the largest until each group size is a
    // power-of-two-friendly target (16, or 32 when straddle effects push past)
    std::vector<Piece> refined;
    {
        std::vector<std::vector<Piece>> groups(E.size());
        for (const auto& p : pieces) groups[p.item].push_back(p);
        for (std::size_t g = 0; g < groups.size(); ++g) {
            auto& grp = groups[g];
            if (grp.empty()) throw numerical_error("interval received no dyadic pieces");
            std::size_t target = 16;
            while (target < grp.size()) target *= 2;
            while (grp.size() < target) {
                std::size_t big = 0;
                for (std::size_t i = 1; i < grp.size(); ++i)
                    if (grp[i].len > grp[big].len) big = i;
                if (grp[big].len == 1) throw resource_error("dyadic resolution exhausted");
                Piece right{grp[big].start + grp[big].len / 2, grp[big].len / 2, grp[big].item};
                grp[big].len /= 2;
                grp.insert(grp.begin() + big + 1, right);
            }
            for (auto& p : grp) refined.push_back(p);
        }
        std::sort(refined.begin(), refined.end(),
                  [](const Piece& a, const Piece& b) { return a.start < b.start; });
    }

    // remap piece owners to the original partition items (pre-split shares tags)
    for (auto& p : refined) p.item = E[p.item].item;

    // pass (c): split the larger neighbor until adjacent ratio <= 2 (circular)
    auto ratio_pass = [&](std::vector<Piece>& v) {
        for (bool changed = true; changed;) {
            changed = false;
            for (std::size_t i = 0; i < v.size(); ++i) {
                std::size_t j = (i + 1) % v.size();
                if (v[i].len > 2 * v[j].len) {
                    Piece right{v[i].start + v[i].len / 2, v[i].len / 2, v[i].item};
                    v[i].len /= 2;
                    v.insert(v.begin() + i + 1, right);
                    changed = true;
                    break;
                }
                if (v[j].len > 2 * v[i].len) {
                    Piece right{v[j].start + v[j].len / 2, v[j].len / 2, v[j].item};
                    v[j].len /= 2;
                    v.insert(v.begin() + j + 1, right);
                    changed = true;
                    break;
                }
            }
        }
    };
    ratio_pass(refined);

    // pass (d): quadrisect everything (guarantees an equal neighbor)
    {
        std::vector<Piece> quads;
        quads.reserve(refined.size() * 4);
        for (const auto& p : refined) {
            if (p.len < 4) throw resource_error("dyadic resolution exhausted in quadrisection");
            for (int q = 0; q < 4; ++q) quads.push_back({p.start + q * (p.len / 4), p.len / 4, p.item});
        }
        refined = std::move(quads);
    }

    // marks: snapped positions of the original corners = starts of each item's
    // first piece
    std::vector<std::uint64_t> marks(partition.items.size());
    std::vector<int> mark_vertex(partition.items.size());
    {
        std::vector<bool> seen(partition.items.size(), false);
        for (const auto& p : refined) {
            if (!seen[p.item]) {
                seen[p.item] = true;
                marks[p.item] = p.start;  // left boundary of item p.item
            }
        }
        for (std::size_t i = 0; i < partition.items.size(); ++i) {
            std::size_t prev = (i + partition.items.size() - 1) % partition.items.size();
            mark_vertex[i] = partition.items[prev].end_vertex;
        }
    }

    // pass (e): vertex-pair equalization: flanks of every mark must be equal;
    // if one is double, split it together with its quadrisection sibling
    {
        for (std::size_t k = 0; k < marks.size(); ++k) {
            std::uint64_t pos = marks[k];
            std::size_t right = refined.size();
            for (std::size_t i = 0; i < refined.size(); ++i)
                if (refined[i].start == pos) right = i;
            if (right == refined.size()) throw numerical_error("mark lost during subdivision");
            std::size_t left = (right + refined.size() - 1) % refined.size();
            if (refined[left].len == refined[right].len) continue;
            auto split_with_sibling = [&](std::size_t idx, bool sibling_left) {
                std::size_t sib = sibling_left ? (idx + refined.size() - 1) % refined.size()
                                               : (idx + 1) % refined.size();
                if (refined[sib].len != refined[idx].len)
                    throw numerical_error("expected equal quadrisection sibling");
                // split idx then sibling; handle indices carefully by value
                auto do_split = [&](std::size_t i) {
                    Piece rightp{refined[i].start + refined[i].len / 2, refined[i].len / 2,
                                 refined[i].item};
                    refined[i].len /= 2;
                    refined.insert(refined.begin() + i + 1, rightp);
                };
                if (sib > idx) {
                    do_split(sib);
                    do_split(idx);
                } else {
                    do_split(idx);
                    do_split(sib);
                }
            };
            if (refined[left].len == 2 * refined[right].len) {
                split_with_sibling(left, true);
            } else if (refined[right].len == 2 * refined[left].len) {
                split_with_sibling(right, false);
            } else {
                throw numerical_error("mark flanks differ by more than a factor of 2");
            }
        }
    }

    IntervalSet out;
    out.resolution = G;
    for (const auto& p : refined) out.intervals.push_back({p.start, p.len, p.item});
    out.marks = marks;
    out.mark_vertex = mark_vertex;
    int max_exp = 0, min_exp = 64;
    for (std::size_t i = 0; i < out.intervals.size(); ++i) {
        int e = out.length_exp(i);
        max_exp = std::max(max_exp, e);
        min_exp = std::min(min_exp, e);
    }
    out.min_length_exp = max_exp;  // smallest interval length = 2^-max_exp
    out.spread = max_exp - min_exp;
    detail::certify_interval_set(out);
    return out;
}

// ---------------------------------------------------------------------------
// heights (the paper's m values) and the tooth plan

struct ToothPlanOptions {
    int delta_exp = 4;            // delta = 2^-delta_exp in rescaled units
    double rescale = 0;           // 0 = auto (longest edge becomes unit length)
    std::uint64_t max_cells = 60000;  // desk-scale budget; coarsens the K-scale
};

struct ToothPlan {
    int n_exp = 0;       // the paper's n
    int big_n = 0;       // the paper's N (after enlargement)
    int seg_exp = 0;     // K-cell length = 2^-seg_exp (literal: n_exp + big_n)
    bool literal_scale = true;
    double delta = 0;    // rescaled units
    double rescale = 1;  // original coordinates * rescale = unit-grid coordinates

    struct EdgePlan {
        int edge = -1;
        double length = 0;    // rescaled edge length
        double j_start = 0;   // J segment within [0, length]
        double j_end = 0;
        int cells = 0;
        std::vector<std::array<int, 2>> heights;  // per cell, [left, right]
        bool tip_at_start = false, tip_at_end = false;
    };
    std::vector<EdgePlan> edges;
    std::vector<std::string> repairs;
};

namespace detail {

struct SideLocator {
    // maps an edge-arclength position in [0,1] to the covering interval's
    // height, through the empirical cumulative measure of that (edge, side)
    std::vector<double> breaks;  // positions (ascending) of interval images
    std::vector<int> heights;

    int height_at(double x) const {
        std::size_t lo = 0, hi = breaks.size() - 1;
        while (lo + 1 < hi) {
            std::size_t mid = (lo + hi) / 2;
            if (breaks[mid] <= x)
                lo = mid;
            else
                hi = mid;
        }
        return heights[lo];
    }
};

}  // namespace detail

// Assigns per-cell, per-side heights from the interval set through the
// empirical CDFs, then repairs and certifies facts (1)-(4).
inline ToothPlan assign_heights(const IntervalSet& intervals, const InitialPartition& partition,
                                const GeomTree& tree, const MeasureTable& table,
                                const ToothPlanOptions& opts = {}) {
    ToothPlan plan;
    // rescale so the longest edge has unit length
    double max_len = 0;
    for (const auto& e : tree.edges) max_len = std::max(max_len, e.length());
    plan.rescale = opts.rescale > 0 ? opts.rescale : 1.0 / max_len;
    plan.delta = std::ldexp(1.0, -opts.delta_exp);

    PlaneTree pt = derive_rotation_system(tree);

    plan.n_exp = intervals.min_length_exp;
    int spread = intervals.spread;
    plan.big_n = std::max(1, spread);

    // enlarge N until the teeth fit inside the delta collar and the K length
    // divides delta
    auto teeth_fit = [&](int N) {
        return 2.0 * N * std::ldexp(1.0, -(plan.n_exp + N)) < plan.delta &&
               plan.n_exp + N >= opts.delta_exp;
    };
    while (!teeth_fit(plan.big_n)) ++plan.big_n;

    // J segments and cell counts at a candidate K exponent
    auto total_cells = [&](int seg_exp) -> std::uint64_t {
        double seg = std::ldexp(1.0, -seg_exp);
        std::uint64_t total = 0;
        for (const auto& e : tree.edges) {
            double len = e.length() * plan.rescale;
            double j0 = (pt.degree(e.from) > 1) ? plan.delta : 0.0;
            double j1 = len - ((pt.degree(e.to) > 1) ? plan.delta : 0.0);
            if (j1 > j0) total += static_cast<std::uint64_t>(std::round((j1 - j0) / seg));
        }
        return total;
    };

    int literal_exp = plan.n_exp + plan.big_n;
    plan.seg_exp = literal_exp;
    // desk-scale coarsening: walk the K exponent down while over budget,
    // never past the teeth-fit bound
    int min_exp = opts.delta_exp + 1;
    while (2.0 * plan.big_n * std::ldexp(1.0, -min_exp) >= plan.delta) ++min_exp;
    while (plan.seg_exp > min_exp && total_cells(plan.seg_exp) > opts.max_cells) --plan.seg_exp;
    if (total_cells(plan.seg_exp) > opts.max_cells)
        throw resource_error("tooth budget too small for this height range");
    plan.literal_scale = plan.seg_exp == literal_exp;
    double seg = std::ldexp(1.0, -plan.seg_exp);

    // locate interval images per (edge, side)
    std::map<std::pair<int, int>, detail::SideLocator> locators;
    {
        // group intervals by item, in circle order
        std::vector<std::vector<std::size_t>> by_item(partition.items.size());
        for (std::size_t i = 0; i < intervals.intervals.size(); ++i)
            by_item[intervals.intervals[i].item].push_back(i);
        for (std::size_t item = 0; item < partition.items.size(); ++item) {
            const auto& it = partition.items[item];
            if (by_item[item].empty()) throw numerical_error("item lost its intervals");
            EdgeSideCDF cdf;
            bool have_cdf = true;
            try {
                cdf = estimate_cumulative(table, it.edge, it.side);
            } catch (const numerical_error&) {
                have_cdf = false;  // undersampled side: fall back to uniform
            }
            double total_units = 0;
            for (std::size_t idx : by_item[item]) total_units += double(intervals.intervals[idx].length);
            detail::SideLocator loc;
            double acc = 0;
            loc.breaks.push_back(it.forward ? 0.0 : 1.0);
            for (std::size_t idx : by_item[item]) {
                acc += double(intervals.intervals[idx].length);
                double rel = acc / total_units;  // walk-relative cumulative measure
                double x = have_cdf ? cdf.inverse(it.forward ? rel : 1.0 - rel)
                                    : (it.forward ? rel : 1.0 - rel);
                int m = (plan.n_exp + plan.big_n) - intervals.length_exp(idx);
                loc.heights.push_back(m);
                loc.breaks.push_back(x);
            }
            loc.breaks.back() = it.forward ? 1.0 : 0.0;
            if (!it.forward) {
                std::reverse(loc.breaks.begin(), loc.breaks.end());
                std::reverse(loc.heights.begin(), loc.heights.end());
            }
            for (std::size_t i = 1; i < loc.breaks.size(); ++i)
                loc.breaks[i] = std::max(loc.breaks[i], loc.breaks[i - 1]);
            locators[{it.edge, it.side}] = std::move(loc);
        }
    }

    // per-edge plans
    for (int e = 0; e < static_cast<int>(tree.edges.size()); ++e) {
        ToothPlan::EdgePlan ep;
        ep.edge = e;
        ep.length = tree.edges[e].length() * plan.rescale;
        double ratio = ep.length / plan.delta;
        if (std::abs(ratio - std::round(ratio)) > 1e-9)
            throw input_error("edge length is not a multiple of delta in rescaled units");
        ep.tip_at_start = pt.degree(tree.edges[e].from) == 1;
        ep.tip_at_end = pt.degree(tree.edges[e].to) == 1;
        ep.j_start = ep.tip_at_start ? 0.0 : plan.delta;
        ep.j_end = ep.length - (ep.tip_at_end ? 0.0 : plan.delta);
        if (ep.j_end <= ep.j_start) {
            ep.cells = 0;
            plan.edges.push_back(ep);
            continue;
        }
        ep.cells = static_cast<int>(std::round((ep.j_end - ep.j_start) / seg));
        ep.heights.resize(ep.cells);
        for (int side = 0; side < 2; ++side) {
            const auto& loc = locators.at({e, side});
            for (int c = 0; c < ep.cells; ++c) {
                double mid = (ep.j_start + (c + 0.5) * seg) / ep.length;
                ep.heights[c][side] = loc.height_at(mid);
            }
        }
        plan.edges.push_back(ep);
    }

    // ---- fact repairs (raise-only) and certification ----
    auto log_repair = [&](const std::string& s) { plan.repairs.push_back(s); };
    int cap = 2 * plan.big_n;

    // corner groups for fact (4): per vertex of degree >= 2, per rotation-
    // consecutive edge pair, the two cells flanking the removed square plus
    // their outward neighbors, on the sector-facing sides
    struct CellRef {
        int edge, cell, side;
    };
    std::vector<std::vector<CellRef>> corner_groups;
    {
        std::map<std::pair<int, int>, int> edge_of;
        for (int e = 0; e < static_cast<int>(tree.edges.size()); ++e) {
            edge_of[{tree.edges[e].from, tree.edges[e].to}] = e;
            edge_of[{tree.edges[e].to, tree.edges[e].from}] = e;
        }
        for (int v = 0; v < pt.vertex_count; ++v) {
            int d = pt.degree(v);
            if (d < 2) continue;
            for (int i = 0; i < d; ++i) {
                int wa = pt.rotations[v][i];
                int wb = pt.rotations[v][(i + 1) % d];
                int ea = edge_of.at({v, wa});
                int eb = edge_of.at({v, wb});
                // sector between direction(v->wa) ccw to direction(v->wb):
                // side of ea facing it = left of outgoing; of eb = right
                bool ea_out_from = tree.edges[ea].from == v;
                bool eb_out_from = tree.edges[eb].from == v;
                int side_a = ea_out_from ? 0 : 1;  // left of stored dir iff outgoing
                int side_b = eb_out_from ? 1 : 0;
                std::vector<CellRef> group;
                auto add_cells = [&](int e, bool at_start, int side) {
                    const auto& ep = plan.edges[e];
                    if (ep.cells < 1) return;
                    int c0 = at_start ? 0 : ep.cells - 1;
                    group.push_back({e, c0, side});
                    if (ep.cells >= 2) {
                        int c1 = at_start ? 1 : ep.cells - 2;
                        group.push_back({e, c1, side});
                    }
                };
                add_cells(ea, ea_out_from, side_a);
                add_cells(eb, eb_out_from, side_b);
                if (group.size() >= 2) corner_groups.push_back(std::move(group));
            }
        }
    }

    // tip zones for fact (3)
    struct TipZone {
        std::vector<std::pair<int, int>> cells;  // (edge, cell)
    };
    std::vector<TipZone> tip_zones;
    for (const auto& ep : plan.edges) {
        if (ep.cells == 0) continue;
        auto add_zone = [&](bool at_start) {
            TipZone z;
            for (int c = 0; c < ep.cells; ++c) {
                double lo = ep.j_start + c * seg;
                double hi = lo + seg;
                double dist = at_start ? lo : ep.length - hi;
                if (dist < plan.delta) z.cells.push_back({ep.edge, c});
            }
            if (!z.cells.empty()) tip_zones.push_back(std::move(z));
        };
        if (ep.tip_at_start) add_zone(true);
        if (ep.tip_at_end) add_zone(false);
    }

    auto H = [&](int e, int c, int s) -> int& { return plan.edges[e].heights[c][s]; };

    // cells pinned by zone or corner-group equality may never be lowered
    std::set<std::tuple<int, int, int>> pinned;
    for (const auto& z : tip_zones)
        for (auto [e, c] : z.cells) {
            pinned.insert({e, c, 0});
            pinned.insert({e, c, 1});
        }
    for (const auto& g : corner_groups)
        for (const auto& r : g) pinned.insert({r.edge, r.cell, r.side});

    bool capped = false;
    for (int round = 0; round < 512; ++round) {
        bool changed = false;
        // fact (3): constant height near degree-1 vertices, both sides
        for (const auto& z : tip_zones) {
            int mx = 0;
            for (auto [e, c] : z.cells) mx = std::max({mx, H(e, c, 0), H(e, c, 1)});
            for (auto [e, c] : z.cells)
                for (int s = 0; s < 2; ++s)
                    if (H(e, c, s) != mx) {
                        H(e, c, s) = mx;
                        changed = true;
                        log_repair("fact3 tip zone on edge " + std::to_string(e));
                    }
        }
        // fact (4): corner groups equal
        for (const auto& g : corner_groups) {
            int mx = 0;
            for (const auto& r : g) mx = std::max(mx, H(r.edge, r.cell, r.side));
            for (const auto& r : g)
                if (H(r.edge, r.cell, r.side) != mx) {
                    H(r.edge, r.cell, r.side) = mx;
                    changed = true;
                    log_repair("fact4 corner at edge " + std::to_string(r.edge));
                }
        }
        // fact (1): adjacent cells differ by at most 1, per side; sweep both
        // directions so rises propagate fully within one round
        for (auto& ep : plan.edges)
            for (int side = 0; side < 2; ++side) {
                auto relax = [&](int c) {
                    int& a = ep.heights[c][side];
                    int& b = ep.heights[c + 1][side];
                    if (a + 1 < b) {
                        a = b - 1;
                        changed = true;
                        log_repair("fact1 raise edge " + std::to_string(ep.edge));
                    } else if (b + 1 < a) {
                        b = a - 1;
                        changed = true;
                        log_repair("fact1 raise edge " + std::to_string(ep.edge));
                    }
                };
                for (int c = 0; c + 1 < ep.cells; ++c) relax(c);
                for (int c = ep.cells - 2; c >= 0; --c) relax(c);
            }
        // fact (2): no isolated heights, per side. Works on the run structure
        // so staircase ramps resolve within a single pass: a singleton run is
        // merged with an equal-level context, or absorbs the boundary cell of
        // the higher neighboring run. Pinned cells are never lowered.
        for (auto& ep : plan.edges) {
            if (ep.cells <= 1) continue;
            for (int side = 0; side < 2; ++side) {
                auto& h = ep.heights;
                int n = ep.cells;
                auto is_pinned = [&](int c) { return pinned.count({ep.edge, c, side}) > 0; };
                int guard = 8 * n + 64;
                for (int c = 0; c < n && guard-- > 0;) {
                    bool le = c > 0 && h[c - 1][side] == h[c][side];
                    bool re = c + 1 < n && h[c + 1][side] == h[c][side];
                    if (le || re) {
                        ++c;
                        continue;
                    }
                    int a = h[c][side];
                    int b = c > 0 ? h[c - 1][side] : INT_MIN;
                    int d = c + 1 < n ? h[c + 1][side] : INT_MIN;
                    if (c == 0) {
                        if (d > a || !is_pinned(c))
                            h[c][side] = d;
                        else
                            h[c + 1][side] = a;
                    } else if (c == n - 1) {
                        if (b > a || !is_pinned(c))
                            h[c][side] = b;
                        else
                            h[c - 1][side] = a;
                    } else if (b == d) {
                        if (b > a || !is_pinned(c))
                            h[c][side] = b;
                        else if (!is_pinned(c - 1))
                            h[c - 1][side] = a;
                        else if (!is_pinned(c + 1))
                            h[c + 1][side] = a;
                        else
                            h[c][side] = b;
                    } else {
                        // ramp (b, a, d) with b != d: absorb from the higher run
                        int hi = (b > d) ? c - 1 : c + 1;
                        int lo = (hi == c - 1) ? c + 1 : c - 1;
                        if (!is_pinned(hi))
                            h[hi][side] = a;
                        else if (!is_pinned(lo))
                            h[lo][side] = a;
                        else
                            h[c][side] = std::max(b, d);
                    }
                    changed = true;
                    log_repair("fact2 isolated on edge " + std::to_string(ep.edge) + " cell " +
                               std::to_string(c) + " side " + std::to_string(side));
                    c = std::max(0, c - 2);  // absorption can isolate the cell behind
                }
            }
        }
        // cap check
        int worst = 0;
        for (const auto& ep : plan.edges)
            for (const auto& hc : ep.heights) worst = std::max({worst, hc[0], hc[1]});
        if (worst > cap) {
            capped = true;
            break;
        }
        if (!changed) break;
        if (round == 511) throw numerical_error("height repairs did not converge");
    }
    // heights beyond 2N would push teeth out of the delta collar; the caller
    // retries with an enlarged N
    if (capped) throw numerical_error("height cap exceeded");

    // final certification of facts (1)-(4)
    for (const auto& ep : plan.edges)
        for (int side = 0; side < 2; ++side)
            for (int c = 0; c + 1 < ep.cells; ++c)
                if (std::abs(ep.heights[c][side] - ep.heights[c + 1][side]) > 1)
                    throw numerical_error("fact (1) violated after repairs");
    for (const auto& ep : plan.edges)
        for (int side = 0; side < 2; ++side)
            for (int c = 0; c < ep.cells; ++c) {
                if (ep.cells == 1) continue;
                bool left_eq = c > 0 && ep.heights[c - 1][side] == ep.heights[c][side];
                bool right_eq = c + 1 < ep.cells && ep.heights[c + 1][side] == ep.heights[c][side];
                if (!left_eq && !right_eq) throw numerical_error("fact (2) violated after repairs");
            }
    for (const auto& z : tip_zones) {
        std::set<int> hs;
        for (auto [e, c] : z.cells) {
            hs.insert(H(e, c, 0));
            hs.insert(H(e, c, 1));
        }
        if (hs.size() > 1) throw numerical_error("fact (3) violated after repairs");
    }
    for (const auto& g : corner_groups) {
        std::set<int> hs;
        for (const auto& r : g) hs.insert(H(r.edge, r.cell, r.side));
        if (hs.size() > 1) throw numerical_error("fact (4) violated after repairs");
    }
    return plan;
}

// ---------------------------------------------------------------------------
// decorated tree

struct DecoratedTree {
    GeomTree geom;  // original coordinates; tags "tooth"/"tip-tooth" on new edges
    ToothPlan plan;
    // provenance: for each T' edge, the originating T edge and K cell
    struct Origin {
        int base_edge = -1;  // T edge
        int cell = -1;       // K cell (base pieces) or left cell (teeth)
        bool tooth = false;
    };
    std::vector<Origin> origins;
    double max_tooth = 0;  // original units
};

inline DecoratedTree build_teeth(const ToothPlan& plan, const GeomTree& tree) {
    DecoratedTree out;
    out.plan = plan;
    out.geom.vertices = tree.vertices;
    double seg = std::ldexp(1.0, -plan.seg_exp);
    double inv = 1.0 / plan.rescale;

    PlaneTree pt = derive_rotation_system(tree);
    // degree-1 vertex positions (rescaled) for the tip cone cap
    std::vector<Complex> tips;
    for (int v = 0; v < pt.vertex_count; ++v)
        if (pt.degree(v) == 1) tips.push_back(tree.vertices[v] * plan.rescale);

    for (const auto& ep : plan.edges) {
        const GeomEdge& e = tree.edges[ep.edge];
        if (e.polyline.size() != 2) throw input_error("decoration requires straight edges");
        Complex A = e.polyline[0] * plan.rescale;
        Complex B = e.polyline[1] * plan.rescale;
        Complex dir = (B - A) / std::abs(B - A);
        Complex normal_left = Complex(0, 1) * dir;

        if (ep.cells == 0) {
            out.geom.edges.push_back(e);
            out.origins.push_back({ep.edge, -1, false});
            continue;
        }

        // foot vertices at interior cell boundaries
        std::vector<int> foot_ids(ep.cells + 1, -1);
        std::vector<Complex> feet(ep.cells + 1);
        for (int j = 1; j < ep.cells; ++j) {
            double x = ep.j_start + j * seg;
            feet[j] = A + x * dir;
            int id = static_cast<int>(out.geom.vertices.size());
            out.geom.vertices.push_back(feet[j] * inv);
            foot_ids[j] = id;
        }
        // base pieces: start -> foot1 -> ... -> end
        int prev = e.from;
        Complex prev_pos = A;
        for (int j = 1; j <= ep.cells; ++j) {
            bool last = j == ep.cells;
            int to = last ? e.to : foot_ids[j];
            Complex to_pos = last ? B : feet[j];
            GeomEdge piece;
            piece.from = prev;
            piece.to = to;
            piece.polyline = {prev_pos * inv, to_pos * inv};
            piece.tag = e.tag;
            out.geom.edges.push_back(piece);
            out.origins.push_back({ep.edge, j - 1, false});
            prev = to;
            prev_pos = to_pos;
        }
        // teeth at interior feet
        for (int j = 1; j < ep.cells; ++j) {
            double x = ep.j_start + j * seg;
            for (int side = 0; side < 2; ++side) {
                int m = std::min(ep.heights[j - 1][side], ep.heights[j][side]);
                double h = m * seg;
                // tip cone: shrink to the 45-degree profile near degree-1 ends
                bool capped = false;
                if (ep.tip_at_start && x < h) {
                    h = x;
                    capped = true;
                }
                if (ep.tip_at_end && (ep.length - x) < h) {
                    h = ep.length - x;
                    capped = true;
                }
                // guard against other edges' tips
                for (Complex t : tips) {
                    double d = std::abs(feet[j] - t);
                    if (d < (1 + std::numbers::sqrt2) * h && std::abs(t - A) > 1e-12 &&
                        std::abs(t - B) > 1e-12) {
                        h = std::min(h, d / (1 + std::numbers::sqrt2));
                        capped = true;
                    }
                }
                if (h <= 0) continue;
                Complex tip = feet[j] + (side == 0 ? normal_left : -normal_left) * h;
                int tip_id = static_cast<int>(out.geom.vertices.size());
                out.geom.vertices.push_back(tip * inv);
                GeomEdge tooth;
                tooth.from = foot_ids[j];
                tooth.to = tip_id;
                tooth.polyline = {feet[j] * inv, tip * inv};
                tooth.tag = capped ? "tip-tooth" : "tooth";
                out.geom.edges.push_back(tooth);
                out.origins.push_back({ep.edge, j - 1, true});
                out.max_tooth = std::max(out.max_tooth, h * inv);
            }
        }
    }

    if (out.max_tooth > plan.delta / plan.rescale)
        throw numerical_error("tooth exceeds the delta collar");
    validate_geometry(out.geom);
    return out;
}

// Convenience wrapper: layout, subdivision, heights, teeth. Retries with an
// enlarged N when the repair pass runs out of headroom.
inline DecoratedTree decorate(const GeomTree& tree, const MeasureTable& table,
                              ToothPlanOptions opts = {}) {
    InitialPartition part = circle_layout(table, tree);
    IntervalSet intervals = subdivide(part);
    for (int attempt = 0; attempt < 10; ++attempt) {
        try {
            ToothPlan plan = assign_heights(intervals, part, tree, table, opts);
            return build_teeth(plan, tree);
        } catch (const numerical_error& err) {
            if (std::string(err.what()).find("height cap") == std::string::npos) throw;
            intervals.spread += 1;  // forces a larger N on retry
        }
    }
    throw numerical_error("irreparable fact violation (height cap after N enlargement)");
}

// ---------------------------------------------------------------------------
// before/after balance comparison

struct BalanceComparison {
    BalanceSummary before;
    BalanceSummary after;
    double before_cv = 0;  // edge-measure coefficient of variation on T
    double after_cv = 0;   // normalized K-cell group CV on T'
    bool side_ratio_improved = false;
};

inline BalanceComparison balance_report(const MeasureTable& before, const MeasureTable& after,
                                        const DecoratedTree& decorated,
                                        std::uint64_t min_hits = 25) {
    BalanceComparison cmp;
    cmp.before = summarize(before, min_hits);
    cmp.after = summarize(after, min_hits);
    cmp.before_cv = cmp.before.edge_measure_cv;

    // group T' edges by originating K cell, normalized by the height targets
    std::map<std::pair<int, int>, double> measured, target;
    double seg_scale = std::ldexp(1.0, -(decorated.plan.n_exp + decorated.plan.big_n));
    for (std::size_t i = 0; i < decorated.geom.edges.size(); ++i) {
        const auto& org = decorated.origins[i];
        if (org.base_edge < 0 || org.cell < 0) continue;
        double m = after.at(static_cast<int>(i), 0).measure + after.at(static_cast<int>(i), 1).measure;
        if (org.tooth) {
            measured[{org.base_edge, org.cell}] += 0.5 * m;
            measured[{org.base_edge, org.cell + 1}] += 0.5 * m;
        } else {
            measured[{org.base_edge, org.cell}] += m;
        }
    }
    for (const auto& ep : decorated.plan.edges)
        for (int c = 0; c < ep.cells; ++c)
            target[{ep.edge, c}] =
                (std::ldexp(1.0, ep.heights[c][0]) + std::ldexp(1.0, ep.heights[c][1])) * seg_scale;
    std::vector<double> ratios;
    for (auto& [key, m] : measured) {
        auto it = target.find(key);
        if (it != target.end() && it->second > 0) ratios.push_back(m / it->second);
    }
    if (!ratios.empty()) {
        double mean = 0;
        for (double r : ratios) mean += r;
        mean /= ratios.size();
        double var = 0;
        for (double r : ratios) var += (r - mean) * (r - mean);
        var /= ratios.size();
        if (mean > 0) cmp.after_cv = std::sqrt(var) / mean;
    }
    cmp.side_ratio_improved = cmp.after.max_side_ratio_dev < cmp.before.max_side_ratio_dev;
    return cmp;
}

}  // namespace truetree
