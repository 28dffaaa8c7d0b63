#pragma once

// Dyadic squares hitting K, spanning tree of the grid graph, and degree
// fixing stubs: a tree with all degrees 1 or 4 within 2^{1-D} of K.
// All geometry is exact: coordinates are integer multiples of 2^{-D-2}.

#include <cmath>
#include <cstdint>
#include <map>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "truetree/errors.hpp"
#include "truetree/geom_tree.hpp"

namespace truetree {

struct DyadicCover {
    int depth = 0;
    std::set<std::pair<std::int64_t, std::int64_t>> squares;  // cell (i,j)
    std::vector<std::string> warnings;
};

// Spanning tree of the corner/edge graph, corners in units of 2^{-D}.
struct GridSpanTree {
    int depth = 0;
    std::vector<std::pair<std::int64_t, std::int64_t>> corners;
    std::vector<std::pair<int, int>> edges;  // corner id pairs
};

struct GridTree {
    int depth = 0;
    GeomTree geom;                                             // tags: "grid" / "stub"
    std::vector<std::pair<std::int64_t, std::int64_t>> lattice;  // units of 2^{-D-2}
};

// Exactly the closed cells containing at least one sample; points on a cell
// boundary belong to every touching cell.
inline DyadicCover dyadic_cover(const std::vector<Complex>& k, int depth) {
    if (k.empty()) throw input_error("dyadic cover of empty point set");
    DyadicCover cover;
    cover.depth = depth;
    double scale = std::ldexp(1.0, depth);
    for (Complex p : k) {
        double sx = p.real() * scale, sy = p.imag() * scale;
        std::int64_t i = static_cast<std::int64_t>(std::floor(sx));
        std::int64_t j = static_cast<std::int64_t>(std::floor(sy));
        bool bx = (sx == double(i));
        bool by = (sy == double(j));
        for (std::int64_t di = bx ? -1 : 0; di <= 0; ++di)
            for (std::int64_t dj = by ? -1 : 0; dj <= 0; ++dj)
                cover.squares.insert({i + di, j + dj});
    }
    // undersampling heuristic: a sample with no companion in its 3x3 cell
    // neighborhood has nearest-neighbor gap > 2^-D
    if (k.size() > 1) {
        std::map<std::pair<std::int64_t, std::int64_t>, int> counts;
        for (Complex p : k) {
            std::int64_t i = static_cast<std::int64_t>(std::floor(p.real() * scale));
            std::int64_t j = static_cast<std::int64_t>(std::floor(p.imag() * scale));
            ++counts[{i, j}];
        }
        bool sparse = false;
        for (Complex p : k) {
            std::int64_t i = static_cast<std::int64_t>(std::floor(p.real() * scale));
            std::int64_t j = static_cast<std::int64_t>(std::floor(p.imag() * scale));
            int around = 0;
            for (std::int64_t di = -1; di <= 1 && !sparse; ++di)
                for (std::int64_t dj = -1; dj <= 1; ++dj) {
                    auto it = counts.find({i + di, j + dj});
                    if (it != counts.end()) around += it->second;
                }
            if (around <= 1) {
                sparse = true;
                break;
            }
        }
        if (sparse)
            cover.warnings.push_back(
                "samples may be spaced wider than 2^-D; cover can miss connectivity");
    }
    return cover;
}

// Deterministic spanning tree: BFS from the lexicographically least corner,
// neighbors explored E, N, W, S.
inline GridSpanTree spanning_tree(const DyadicCover& cover) {
    using Corner = std::pair<std::int64_t, std::int64_t>;
    std::set<Corner> corners;
    std::set<std::pair<Corner, Corner>> sides;  // sorted endpoint pairs
    auto add_side = [&](Corner a, Corner b) { sides.insert({std::min(a, b), std::max(a, b)}); };
    for (auto [i, j] : cover.squares) {
        Corner c00{i, j}, c10{i + 1, j}, c01{i, j + 1}, c11{i + 1, j + 1};
        corners.insert(c00);
        corners.insert(c10);
        corners.insert(c01);
        corners.insert(c11);
        add_side(c00, c10);
        add_side(c10, c11);
        add_side(c01, c11);
        add_side(c00, c01);
    }

    std::map<Corner, int> id;
    GridSpanTree tree;
    tree.depth = cover.depth;
    for (const Corner& c : corners) {
        id[c] = static_cast<int>(tree.corners.size());
        tree.corners.push_back(c);
    }

    std::vector<char> visited(corners.size(), 0);
    std::queue<Corner> queue;
    Corner start = *corners.begin();
    visited[id[start]] = 1;
    queue.push(start);
    const std::int64_t dir[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};  // E N W S
    int reached = 1;
    while (!queue.empty()) {
        Corner c = queue.front();
        queue.pop();
        for (auto [dx, dy] : dir) {
            Corner nb{c.first + dx, c.second + dy};
            auto it = id.find(nb);
            if (it == id.end()) continue;
            if (!sides.count({std::min(c, nb), std::max(c, nb)})) continue;
            if (visited[it->second]) continue;
            visited[it->second] = 1;
            ++reached;
            tree.edges.push_back({id[c], it->second});
            queue.push(nb);
        }
    }
    if (reached != static_cast<int>(corners.size()))
        throw input_error("dyadic cover is disconnected (K not connected or undersampled)");
    return tree;
}

// Stubs of length 2^{-D-2} in unused axis directions (E, N, W, S order) at
// every vertex of degree 2 or 3; original degree-1 vertices are left alone.
inline GridTree fix_degrees(const GridSpanTree& span) {
    using Corner = std::pair<std::int64_t, std::int64_t>;
    GridTree out;
    out.depth = span.depth;
    // lattice units of 2^{-D-2}: grid edges are 4 units, stubs 1 unit
    for (auto [i, j] : span.corners) out.lattice.push_back({4 * i, 4 * j});

    std::vector<std::set<std::pair<std::int64_t, std::int64_t>>> used(span.corners.size());
    for (auto [a, b] : span.edges) {
        std::int64_t dx = span.corners[b].first - span.corners[a].first;
        std::int64_t dy = span.corners[b].second - span.corners[a].second;
        used[a].insert({dx, dy});
        used[b].insert({-dx, -dy});
    }

    struct PendingEdge {
        int from, to;
        std::string tag;
    };
    std::vector<PendingEdge> edges;
    for (auto [a, b] : span.edges) edges.push_back({a, b, "grid"});

    std::set<Corner> occupied(out.lattice.begin(), out.lattice.end());
    const std::int64_t dir[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    for (int v = 0; v < static_cast<int>(span.corners.size()); ++v) {
        int deg = static_cast<int>(used[v].size());
        if (deg <= 1 || deg >= 4) continue;
        for (auto [dx, dy] : dir) {
            if (deg == 4) break;
            if (used[v].count({dx, dy})) continue;
            Corner tip{out.lattice[v].first + dx, out.lattice[v].second + dy};
            if (occupied.count(tip)) throw numerical_error("stub collision (grid invariant broken)");
            occupied.insert(tip);
            int tip_id = static_cast<int>(out.lattice.size());
            out.lattice.push_back(tip);
            edges.push_back({v, tip_id, "stub"});
            used[v].insert({dx, dy});
            ++deg;
        }
    }

    double unit = std::ldexp(1.0, -span.depth - 2);
    for (auto [x, y] : out.lattice) out.geom.vertices.push_back({x * unit, y * unit});
    for (const auto& e : edges)
        out.geom.edges.push_back(
            {e.from, e.to, {out.geom.vertices[e.from], out.geom.vertices[e.to]}, e.tag});
    return out;
}

// Full pipeline: cover, spanning tree, degree fixing. Guarantees the output
// is within 2^{-D+1} of K in the Hausdorff metric.
inline GridTree approximate(const std::vector<Complex>& k, int depth) {
    GridTree tree = fix_degrees(spanning_tree(dyadic_cover(k, depth)));
    double bound = std::ldexp(1.0, -depth + 1);
    double spacing = std::ldexp(1.0, -depth - 3);
    double d = hausdorff_distance(sample_points(tree.geom, spacing), k);
    if (d > bound) throw numerical_error("grid tree misses the 2^{-D+1} Hausdorff guarantee");
    return tree;
}

}  // namespace truetree
