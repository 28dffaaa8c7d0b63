#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "catch_amalgamated.hpp"
#include "truetree/plane_tree.hpp"

using namespace truetree;

namespace {

// Independent equivalence oracle: exhaustive corner matching. Two plane trees
// are equivalent iff some corner-rooted boundary walk of b matches a fixed
// corner-rooted walk of a. The walk comparison is a recursive structural
// check, written without canonical_code.
struct CornerWalk {
    const PlaneTree& t;

    bool equal_subtree(int va, int pa, int sa, const PlaneTree& tb, int vb, int pb, int sb) const {
        const auto& ra = t.rotations[va];
        const auto& rb = tb.rotations[vb];
        int da = static_cast<int>(ra.size()), db = static_cast<int>(rb.size());
        int ka = (pa < 0) ? da : da - 1;
        int kb = (pb < 0) ? db : db - 1;
        if (ka != kb) return false;
        for (int i = 0; i < ka; ++i) {
            int wa = ra[(sa + i) % da];
            int wb = rb[(sb + i) % db];
            const auto& rwa = t.rotations[wa];
            const auto& rwb = tb.rotations[wb];
            int backa = 0, backb = 0;
            for (int j = 0; j < static_cast<int>(rwa.size()); ++j)
                if (rwa[j] == va) backa = j;
            for (int j = 0; j < static_cast<int>(rwb.size()); ++j)
                if (rwb[j] == vb) backb = j;
            if (!equal_subtree(wa, va, (backa + 1) % std::max<int>(1, rwa.size()), tb, wb, vb,
                               (backb + 1) % std::max<int>(1, rwb.size())))
                return false;
        }
        return true;
    }
};

bool oracle_equivalent(const PlaneTree& a, const PlaneTree& b) {
    if (a.vertex_count != b.vertex_count) return false;
    CornerWalk wa{a};
    for (int v = 0; v < b.vertex_count; ++v)
        for (int s = 0; s < b.degree(v); ++s)
            if (wa.equal_subtree(0, -1, 0, b, v, -1, s)) return true;
    return false;
}

PlaneTree relabel(const PlaneTree& t, const std::vector<int>& perm) {
    PlaneTree out;
    out.vertex_count = t.vertex_count;
    out.rotations.assign(t.vertex_count, {});
    for (int v = 0; v < t.vertex_count; ++v)
        for (int w : t.rotations[v]) out.rotations[perm[v]].push_back(perm[w]);
    return out;
}

PlaneTree rotate_lists(const PlaneTree& t, std::mt19937_64& rng) {
    PlaneTree out = t;
    for (auto& r : out.rotations)
        if (r.size() > 1) std::rotate(r.begin(), r.begin() + rng() % r.size(), r.end());
    return out;
}

// All labeled trees on n vertices via Prufer sequences, with every cyclic
// order at every vertex: the brute-force class count oracle.
int brute_force_class_count(int vertices) {
    std::set<std::string> codes;
    int n = vertices;
    std::vector<int> prufer(std::max(0, n - 2), 0);
    auto emit_tree = [&](const std::vector<std::pair<int, int>>& eds) {
        PlaneTree base;
        base.vertex_count = n;
        base.rotations.assign(n, {});
        for (auto [a, b] : eds) {
            base.rotations[a].push_back(b);
            base.rotations[b].push_back(a);
        }
        // every cyclic order = permutations of each rotation list fixing slot 0
        std::vector<std::vector<std::vector<int>>> options(n);
        for (int v = 0; v < n; ++v) {
            auto r = base.rotations[v];
            std::sort(r.begin() + (r.empty() ? 0 : 1), r.end());
            if (r.size() <= 2) {
                options[v] = {r};
            } else {
                std::vector<int> tail(r.begin() + 1, r.end());
                std::sort(tail.begin(), tail.end());
                do {
                    std::vector<int> full{r[0]};
                    full.insert(full.end(), tail.begin(), tail.end());
                    options[v].push_back(full);
                } while (std::next_permutation(tail.begin(), tail.end()));
            }
        }
        std::vector<int> pick(n, 0);
        auto rec = [&](auto&& self, int v) -> void {
            if (v == n) {
                PlaneTree t = base;
                for (int i = 0; i < n; ++i) t.rotations[i] = options[i][pick[i]];
                codes.insert(canonical_code(t));
                return;
            }
            for (pick[v] = 0; pick[v] < static_cast<int>(options[v].size()); ++pick[v])
                self(self, v + 1);
        };
        rec(rec, 0);
    };
    auto decode = [&](const std::vector<int>& seq) {
        std::vector<int> deg(n, 1);
        for (int x : seq) ++deg[x];
        std::vector<std::pair<int, int>> eds;
        std::set<int> leaves;
        for (int v = 0; v < n; ++v)
            if (deg[v] == 1) leaves.insert(v);
        std::vector<int> s = seq;
        for (int x : s) {
            int leaf = *leaves.begin();
            leaves.erase(leaves.begin());
            eds.push_back({leaf, x});
            if (--deg[x] == 1) leaves.insert(x);
        }
        int u = *leaves.begin();
        int v = *std::next(leaves.begin());
        eds.push_back({u, v});
        emit_tree(eds);
    };
    if (n == 2) {
        decode({});
        return static_cast<int>(codes.size());
    }
    std::vector<int> seq(n - 2, 0);
    auto rec = [&](auto&& self, int pos) -> void {
        if (pos == n - 2) {
            decode(seq);
            return;
        }
        for (seq[pos] = 0; seq[pos] < n; ++seq[pos]) self(self, pos + 1);
    };
    rec(rec, 0);
    return static_cast<int>(codes.size());
}

PlaneTree random_rotation_tree(int edges, std::mt19937_64& rng) {
    int n = edges + 1;
    PlaneTree t;
    t.vertex_count = n;
    t.rotations.assign(n, {});
    for (int v = 1; v < n; ++v) {
        int parent = static_cast<int>(rng() % v);
        t.rotations[parent].push_back(v);
        t.rotations[v].push_back(parent);
    }
    for (auto& r : t.rotations) std::shuffle(r.begin(), r.end(), rng);
    return t;
}

}  // namespace

TEST_CASE("validate basics") {
    PlaneTree single;
    single.vertex_count = 2;
    single.rotations = {{1}, {0}};
    CHECK(!validate(single));

    PlaneTree triangle;
    triangle.vertex_count = 3;
    triangle.rotations = {{1, 2}, {0, 2}, {0, 1}};
    auto bad = validate(triangle);
    REQUIRE(bad);
    CHECK(bad->find("cycle") != std::string::npos);

    PlaneTree star = make_star(4);
    CHECK(!validate(star));
    std::rotate(star.rotations[4].begin(), star.rotations[4].begin() + 2, star.rotations[4].end());
    CHECK(!validate(star));
}

TEST_CASE("bipartite coloring") {
    PlaneTree path = make_path(2);
    auto c = bipartite_coloring(path, 0);
    CHECK(c.color == std::vector<int>{1, -1, 1});

    PlaneTree star = make_star(4);
    auto cs = bipartite_coloring(star, 4);
    CHECK(cs.color[4] == 1);
    for (int leaf = 0; leaf < 4; ++leaf) CHECK(cs.color[leaf] == -1);

    // flipping root parity negates all colors; edge products are -1
    std::mt19937_64 rng(7);
    for (int iter = 0; iter < 20; ++iter) {
        PlaneTree t = random_rotation_tree(5, rng);
        auto a = bipartite_coloring(t, 0);
        for (auto [u, v] : t.edges()) CHECK(a.color[u] * a.color[v] == -1);
        for (int r = 1; r < t.vertex_count; ++r) {
            auto b = bipartite_coloring(t, r);
            int sign = b.color[0];  // -1 iff r is at odd distance from 0
            for (int v = 0; v < t.vertex_count; ++v) CHECK(b.color[v] == sign * a.color[v]);
        }
    }
}

TEST_CASE("canonical code invariance and separation") {
    std::mt19937_64 rng(11);
    for (int iter = 0; iter < 50; ++iter) {
        PlaneTree t = random_rotation_tree(2 + int(rng() % 5), rng);
        std::vector<int> perm(t.vertex_count);
        for (int i = 0; i < t.vertex_count; ++i) perm[i] = i;
        std::shuffle(perm.begin(), perm.end(), rng);
        PlaneTree u = rotate_lists(relabel(t, perm), rng);
        CHECK(canonical_code(t) == canonical_code(u));
        CHECK(is_equivalent(t, u));
    }

    CHECK(canonical_code(make_path(3)) != canonical_code(make_star(3)));
    CHECK_FALSE(is_equivalent(make_path(3), make_star(3)));

    // homeomorphic but not equivalent: hub with branches (leaf, leaf, path2,
    // path2) in orders LLPP vs LPLP
    auto spider = [](const std::vector<int>& branch_lengths) {
        PlaneTree t;
        t.vertex_count = 1;
        t.rotations.assign(1, {});
        for (int len : branch_lengths) {
            int prev = 0;
            for (int k = 0; k < len; ++k) {
                int v = t.vertex_count++;
                t.rotations.push_back({});
                t.rotations[prev].push_back(v);
                t.rotations[v].push_back(prev);
                prev = v;
            }
        }
        return t;
    };
    PlaneTree llpp = spider({1, 1, 2, 2});
    PlaneTree lplp = spider({1, 2, 1, 2});
    CHECK(canonical_code(llpp) != canonical_code(lplp));
    CHECK(oracle_equivalent(llpp, llpp));
    CHECK_FALSE(oracle_equivalent(llpp, lplp));
}

TEST_CASE("mirror equivalence is separate") {
    // spider with three branches of distinct lengths is chiral
    auto spider123 = [] {
        PlaneTree t;
        t.vertex_count = 1;
        t.rotations.assign(1, {});
        for (int len : {1, 2, 3}) {
            int prev = 0;
            for (int k = 0; k < len; ++k) {
                int v = t.vertex_count++;
                t.rotations.push_back({});
                t.rotations[prev].push_back(v);
                t.rotations[v].push_back(prev);
                prev = v;
            }
        }
        return t;
    }();
    PlaneTree m = mirror(spider123);
    CHECK_FALSE(oracle_equivalent(spider123, m));
    CHECK_FALSE(is_equivalent(spider123, m));
    CHECK(is_equivalent(spider123, m, /*identify_mirror=*/true));

    // achiral control: star
    PlaneTree star = make_star(4);
    CHECK(is_equivalent(star, mirror(star)));
}

TEST_CASE("enumeration matches brute force") {
    CHECK(enumerate_plane_trees(1).size() == 1);
    CHECK(enumerate_plane_trees(2).size() == 1);

    int oracle = brute_force_class_count(4);  // all rotation systems on 4 vertices
    CHECK(static_cast<int>(enumerate_plane_trees(3).size()) == oracle);

    CHECK_THROWS_AS(enumerate_plane_trees(10), resource_error);

    // pairwise inequivalent, and every random tree matches exactly one member
    for (int n = 1; n <= 5; ++n) {
        auto list = enumerate_plane_trees(n);
        for (std::size_t i = 0; i < list.size(); ++i)
            for (std::size_t j = i + 1; j < list.size(); ++j)
                CHECK_FALSE(is_equivalent(list[i], list[j]));
        std::mt19937_64 rng(100 + n);
        for (int iter = 0; iter < 25; ++iter) {
            PlaneTree t = random_rotation_tree(n, rng);
            int matches = 0;
            for (const auto& member : list) matches += is_equivalent(t, member);
            CHECK(matches == 1);
        }
    }
}

TEST_CASE("internal degree sum identity") {
    for (int n = 1; n <= 6; ++n)
        for (const auto& t : enumerate_plane_trees(n)) {
            int sum = 0;
            for (int v = 0; v < t.vertex_count; ++v)
                if (t.degree(v) > 1) sum += t.degree(v) - 1;
            CHECK(sum == t.edge_count() - 1);
        }
}
