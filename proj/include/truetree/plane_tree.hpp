#pragma once

// Combinatorial plane trees: rotation systems, canonical codes,
// bipartite colorings and exhaustive enumeration of small trees.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "truetree/errors.hpp"

namespace truetree {

// A tree embedded in the plane up to orientation-preserving homeomorphism:
// vertices 0..n-1 plus, for every vertex, the counterclockwise cyclic order
// of its neighbors.
struct PlaneTree {
    int vertex_count = 0;
    std::vector<std::vector<int>> rotations;  // ccw neighbor order per vertex

    int edge_count() const { return vertex_count - 1; }
    int degree(int v) const { return static_cast<int>(rotations[v].size()); }

    // Unordered vertex pairs in canonical (sorted lexicographic) order.
    std::vector<std::pair<int, int>> edges() const {
        std::set<std::pair<int, int>> s;
        for (int v = 0; v < vertex_count; ++v)
            for (int w : rotations[v]) s.insert({std::min(v, w), std::max(v, w)});
        return {s.begin(), s.end()};
    }

    // Canonical edge id of {v,w}, or -1.
    int edge_id(int v, int w) const {
        auto e = edges();
        auto it = std::lower_bound(e.begin(), e.end(),
                                   std::make_pair(std::min(v, w), std::max(v, w)));
        if (it == e.end() || *it != std::make_pair(std::min(v, w), std::max(v, w))) return -1;
        return static_cast<int>(it - e.begin());
    }
};

struct BipartiteColoring {
    std::vector<int> color;  // +1 / -1 per vertex
};

// Checks all PlaneTree invariants; returns std::nullopt when valid, else a
// description of the first violation found.
inline std::optional<std::string> validate(const PlaneTree& t) {
    if (t.vertex_count <= 0) return "vertex count must be positive";
    if (static_cast<int>(t.rotations.size()) != t.vertex_count)
        return "rotation table size does not match vertex count";

    std::size_t half_edges = 0;
    for (int v = 0; v < t.vertex_count; ++v) {
        std::set<int> seen;
        for (int w : t.rotations[v]) {
            if (w < 0 || w >= t.vertex_count) return "neighbor id out of range";
            if (w == v) return "self loop";
            if (!seen.insert(w).second) return "duplicate neighbor in rotation list";
        }
        half_edges += t.rotations[v].size();
    }
    for (int v = 0; v < t.vertex_count; ++v)
        for (int w : t.rotations[v]) {
            const auto& rw = t.rotations[w];
            if (std::count(rw.begin(), rw.end(), v) != 1)
                return "edge does not appear in exactly two rotation lists";
        }

    if (half_edges != 2 * std::size_t(std::max(0, t.vertex_count - 1)))
        return "edge count is not vertex_count - 1 (cycle or forest)";

    // Connectivity; together with the count above this rules out cycles.
    std::vector<char> vis(t.vertex_count, 0);
    std::vector<int> stack{0};
    vis[0] = 1;
    int reached = 1;
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (int w : t.rotations[v])
            if (!vis[w]) {
                vis[w] = 1;
                ++reached;
                stack.push_back(w);
            }
    }
    if (reached != t.vertex_count) return "not connected (cycle elsewhere or forest)";
    return std::nullopt;
}

inline void require_valid(const PlaneTree& t) {
    if (auto bad = validate(t)) throw input_error("invalid plane tree: " + *bad);
}

// Root gets +1; colors alternate with graph distance.
inline BipartiteColoring bipartite_coloring(const PlaneTree& t, int root = 0) {
    require_valid(t);
    if (root < 0 || root >= t.vertex_count) throw input_error("coloring root out of range");
    BipartiteColoring c;
    c.color.assign(t.vertex_count, 0);
    std::vector<int> stack{root};
    c.color[root] = +1;
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (int w : t.rotations[v])
            if (c.color[w] == 0) {
                c.color[w] = -c.color[v];
                stack.push_back(w);
            }
    }
    return c;
}

namespace detail {

// Boundary-walk word from the corner (root, slot): the walk descends into the
// subtrees hanging off `root` starting with neighbor rotations[root][slot],
// emitting 'd' going down an edge and 'u' coming back. Length is 2*edges.
inline std::string corner_code(const PlaneTree& t, int root, int slot) {
    std::string code;
    code.reserve(2 * std::size_t(t.edge_count()));
    // frame: (vertex, parent, next child index in the rotation starting point)
    struct Frame {
        int v, parent, start, emitted;
    };
    std::vector<Frame> st;
    st.push_back({root, -1, slot, 0});
    while (!st.empty()) {
        Frame& f = st.back();
        const auto& rot = t.rotations[f.v];
        int deg = static_cast<int>(rot.size());
        int limit = (f.parent < 0) ? deg : deg - 1;
        if (f.emitted == limit) {
            st.pop_back();
            if (!st.empty()) code.push_back('u');
            continue;
        }
        int idx = (f.start + f.emitted) % deg;
        int w = rot[idx];
        ++f.emitted;
        code.push_back('d');
        // child's rotation starts just after the edge back to f.v
        const auto& rw = t.rotations[w];
        int back = 0;
        for (int i = 0; i < static_cast<int>(rw.size()); ++i)
            if (rw[i] == f.v) back = i;
        st.push_back({w, f.v, (back + 1) % std::max<int>(1, static_cast<int>(rw.size())), 0});
    }
    return code;
}

}  // namespace detail

// Minimal boundary-walk word over all 2n starting corners. Two plane trees are
// orientation-preserving equivalent iff these codes agree.
inline std::string canonical_code(const PlaneTree& t) {
    require_valid(t);
    if (t.vertex_count == 1) return "";
    std::string best;
    for (int v = 0; v < t.vertex_count; ++v) {
        // Skip slot multiplicity k times at every vertex: corners are (v, slot).
        for (int slot = 0; slot < t.degree(v); ++slot) {
            std::string c = detail::corner_code(t, v, slot);
            if (best.empty() || c < best) best = std::move(c);
        }
    }
    return best;
}

inline PlaneTree mirror(const PlaneTree& t) {
    PlaneTree m = t;
    for (auto& r : m.rotations) std::reverse(r.begin(), r.end());
    return m;
}

inline bool is_equivalent(const PlaneTree& a, const PlaneTree& b,
                          bool identify_mirror = false) {
    if (a.vertex_count != b.vertex_count) return false;
    std::string ca = canonical_code(a);
    if (ca == canonical_code(b)) return true;
    if (identify_mirror && ca == canonical_code(mirror(b))) return true;
    return false;
}

namespace detail {

// Rooted plane tree from a balanced parenthesis word ('d' = open).
inline PlaneTree tree_from_word(const std::string& word) {
    PlaneTree t;
    t.vertex_count = static_cast<int>(word.size() / 2) + 1;
    t.rotations.assign(t.vertex_count, {});
    int next = 1;
    std::vector<int> stack{0};
    for (char ch : word) {
        if (ch == 'd') {
            int v = stack.back();
            int w = next++;
            t.rotations[v].push_back(w);
            t.rotations[w].push_back(v);  // parent first; children appended after
            stack.push_back(w);
        } else {
            stack.pop_back();
        }
    }
    // Fix child rotation lists: parent must come first, children in word order.
    // Construction above already appends the parent before any child of w.
    return t;
}

}  // namespace detail

// One representative per orientation-preserving equivalence class, sorted by
// canonical code. Exhaustive over all rooted plane trees (Dyck words).
inline std::vector<PlaneTree> enumerate_plane_trees(int n_edges) {
    if (n_edges < 1) throw input_error("edge count must be >= 1");
    if (n_edges > 9) throw resource_error("plane tree enumeration capped at 9 edges");
    std::map<std::string, PlaneTree> classes;
    // Generate Dyck words of length 2n.
    std::string word(2 * std::size_t(n_edges), 'u');
    auto rec = [&](auto&& self, int pos, int open, int closed) -> void {
        if (pos == 2 * n_edges) {
            PlaneTree t = detail::tree_from_word(word);
            classes.emplace(canonical_code(t), t);
            return;
        }
        if (open < n_edges) {
            word[pos] = 'd';
            self(self, pos + 1, open + 1, closed);
        }
        if (closed < open) {
            word[pos] = 'u';
            self(self, pos + 1, open, closed + 1);
        }
    };
    rec(rec, 0, 0, 0);
    std::vector<PlaneTree> out;
    out.reserve(classes.size());
    for (auto& [code, t] : classes) out.push_back(std::move(t));
    return out;
}

// Convenience constructors used throughout the tests and the CLI.
inline PlaneTree make_path(int n_edges) {
    PlaneTree t;
    t.vertex_count = n_edges + 1;
    t.rotations.assign(t.vertex_count, {});
    for (int v = 0; v + 1 <= n_edges; ++v) {
        t.rotations[v].push_back(v + 1);
        t.rotations[v + 1].push_back(v);
    }
    return t;
}

// Star with the hub as the last vertex id, so vertex 0 (a leaf) is the default
// coloring root and the hub receives -1.
inline PlaneTree make_star(int n_edges) {
    PlaneTree t;
    t.vertex_count = n_edges + 1;
    t.rotations.assign(t.vertex_count, {});
    int hub = n_edges;
    for (int leaf = 0; leaf < n_edges; ++leaf) {
        t.rotations[hub].push_back(leaf);
        t.rotations[leaf].push_back(hub);
    }
    return t;
}

}  // namespace truetree
