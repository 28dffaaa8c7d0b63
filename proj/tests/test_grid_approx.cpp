#include <cmath>
#include <numbers>
#include <set>

#include "catch_amalgamated.hpp"
#include "truetree/grid_approx.hpp"

using namespace truetree;

namespace {

// Independent oracle: brute-force point-in-closed-cell over candidate cells.
std::set<std::pair<std::int64_t, std::int64_t>> brute_cover(const std::vector<Complex>& k,
                                                            int depth) {
    std::set<std::pair<std::int64_t, std::int64_t>> cells;
    double size = std::ldexp(1.0, -depth);
    for (Complex p : k) {
        std::int64_t ci = static_cast<std::int64_t>(std::floor(p.real() / size));
        std::int64_t cj = static_cast<std::int64_t>(std::floor(p.imag() / size));
        for (std::int64_t i = ci - 1; i <= ci + 1; ++i)
            for (std::int64_t j = cj - 1; j <= cj + 1; ++j)
                if (i * size <= p.real() && p.real() <= (i + 1) * size && j * size <= p.imag() &&
                    p.imag() <= (j + 1) * size)
                    cells.insert({i, j});
    }
    return cells;
}

std::vector<Complex> sample_segment(Complex a, Complex b, double spacing) {
    std::vector<Complex> pts;
    int n = std::max(1, static_cast<int>(std::ceil(std::abs(b - a) / spacing)));
    for (int i = 0; i <= n; ++i) pts.push_back(a + (double(i) / n) * (b - a));
    return pts;
}

std::vector<Complex> sample_circle(double radius, int n) {
    std::vector<Complex> pts;
    for (int i = 0; i < n; ++i) pts.push_back(std::polar(radius, 2 * std::numbers::pi * i / n));
    return pts;
}

}  // namespace

TEST_CASE("dyadic cover") {
    auto single = dyadic_cover({{0.1, 0.1}}, 0);
    CHECK(single.squares == std::set<std::pair<std::int64_t, std::int64_t>>{{0, 0}});

    auto seg = sample_segment({0, 0}, {1, 0}, 0.25);
    auto cover = dyadic_cover(seg, 1);
    CHECK(cover.squares == brute_cover(seg, 1));

    auto circle = sample_circle(1.0, 512);
    auto ccover = dyadic_cover(circle, 2);
    CHECK(ccover.squares == brute_cover(circle, 2));

    CHECK_THROWS_AS(dyadic_cover({}, 2), input_error);
}

TEST_CASE("spanning tree of one cell") {
    DyadicCover cover;
    cover.depth = 0;
    cover.squares = {{0, 0}};
    auto tree = spanning_tree(cover);
    REQUIRE(tree.corners.size() == 4);
    REQUIRE(tree.edges.size() == 3);

    // BFS from (0,0), E N W S order: keeps bottom, left, right; drops the
    // remaining side of the cell
    std::set<std::pair<std::pair<std::int64_t, std::int64_t>, std::pair<std::int64_t, std::int64_t>>>
        got;
    for (auto [a, b] : tree.edges) {
        auto ca = tree.corners[a], cb = tree.corners[b];
        got.insert({std::min(ca, cb), std::max(ca, cb)});
    }
    decltype(got) expected{
        {{0, 0}, {1, 0}},
        {{0, 0}, {0, 1}},
        {{1, 0}, {1, 1}},
    };
    CHECK(got == expected);
}

TEST_CASE("spanning tree counts") {
    DyadicCover cover;
    cover.depth = 0;
    cover.squares = {{0, 0}, {1, 0}};
    auto tree = spanning_tree(cover);
    CHECK(tree.corners.size() == 6);
    CHECK(tree.edges.size() == 5);

    for (int w = 1; w <= 3; ++w) {
        DyadicCover c2;
        c2.depth = 0;
        for (int i = 0; i < w; ++i)
            for (int j = 0; j <= i; ++j) c2.squares.insert({i, j});
        auto t2 = spanning_tree(c2);
        CHECK(t2.edges.size() == t2.corners.size() - 1);
    }

    DyadicCover split;
    split.depth = 0;
    split.squares = {{0, 0}, {5, 5}};
    CHECK_THROWS_AS(spanning_tree(split), input_error);
}

TEST_CASE("degree fixing") {
    GridSpanTree straight;
    straight.depth = 0;
    straight.corners = {{0, 0}, {1, 0}, {2, 0}};
    straight.edges = {{0, 1}, {1, 2}};
    GridTree fixed = fix_degrees(straight);
    // middle vertex picks up two perpendicular stubs
    CHECK(fixed.geom.degree(1) == 4);
    CHECK(fixed.geom.degree(0) == 1);
    int stubs = 0;
    for (const auto& e : fixed.geom.edges) stubs += (e.tag == "stub");
    CHECK(stubs == 2);
    std::set<std::pair<std::int64_t, std::int64_t>> tips(fixed.lattice.begin() + 3,
                                                         fixed.lattice.end());
    CHECK(tips == std::set<std::pair<std::int64_t, std::int64_t>>{{4, 1}, {4, -1}});

    GridSpanTree corner;
    corner.depth = 0;
    corner.corners = {{0, 0}, {1, 0}, {1, 1}};
    corner.edges = {{0, 1}, {1, 2}};
    GridTree cf = fix_degrees(corner);
    std::set<std::pair<std::int64_t, std::int64_t>> ctips(cf.lattice.begin() + 3, cf.lattice.end());
    // corner vertex at lattice (4,0) used W and N; stubs go E and S
    CHECK(ctips == std::set<std::pair<std::int64_t, std::int64_t>>{{5, 0}, {4, -1}});

    for (const auto& e : cf.geom.edges) {
        double len = e.length();
        bool grid_len = len == std::ldexp(1.0, -cf.depth);
        bool stub_len = len == std::ldexp(1.0, -cf.depth - 2);
        CHECK((grid_len || stub_len));
    }
}

TEST_CASE("approximate meets the Hausdorff guarantee") {
    auto point = approximate({{0.3, 0.4}}, 2);
    CHECK(hausdorff_distance(sample_points(point.geom, 0.01), {{0.3, 0.4}}) <= 0.5);

    auto seg = sample_segment({0.01, 0.02}, {1.01, 0.02}, std::ldexp(1.0, -6));
    auto t3 = approximate(seg, 3);
    double d3 = hausdorff_distance(sample_points(t3.geom, std::ldexp(1.0, -6)), seg);
    CHECK(d3 <= std::ldexp(1.0, -2));

    auto circle = sample_circle(1.0, 2048);
    auto t4 = approximate(circle, 4);
    double d4 = hausdorff_distance(sample_points(t4.geom, std::ldexp(1.0, -7)), circle);
    CHECK(d4 <= std::ldexp(1.0, -3));

    // output structure: degrees in {1,4}, connected tree, determinism
    for (const GridTree* g : {&t3, &t4}) {
        PlaneTree pt = derive_rotation_system(g->geom);
        CHECK(!validate(pt));
        for (int v = 0; v < pt.vertex_count; ++v) {
            int d = pt.degree(v);
            CHECK((d == 1 || d == 4));
        }
        validate_geometry(g->geom);
    }

    auto t4b = approximate(circle, 4);
    CHECK(t4b.lattice == t4.lattice);
    REQUIRE(t4b.geom.edges.size() == t4.geom.edges.size());
    for (std::size_t i = 0; i < t4.geom.edges.size(); ++i) {
        CHECK(t4b.geom.edges[i].from == t4.geom.edges[i].from);
        CHECK(t4b.geom.edges[i].to == t4.geom.edges[i].to);
    }
}
