#include <cmath>
#include <numbers>
#include <random>

#include "catch_amalgamated.hpp"
#include "truetree/geom_tree.hpp"

using namespace truetree;

namespace {

GeomTree make_segment(Complex a, Complex b) {
    GeomTree t;
    t.vertices = {a, b};
    t.edges.push_back({0, 1, {a, b}, ""});
    return t;
}

GeomTree make_plus(double arm = 1.0) {
    GeomTree t;
    t.vertices = {{0, 0}, {arm, 0}, {0, arm}, {-arm, 0}, {0, -arm}};
    for (int i = 1; i <= 4; ++i) t.edges.push_back({0, i, {t.vertices[0], t.vertices[i]}, ""});
    return t;
}

std::vector<Complex> random_points(std::mt19937_64& rng, int n) {
    auto u = [&] { return double(rng() >> 11) * 0x1p-53 * 4.0 - 2.0; };
    std::vector<Complex> pts;
    for (int i = 0; i < n; ++i) pts.push_back({u(), u()});
    return pts;
}

double brute_hausdorff(const std::vector<Complex>& a, const std::vector<Complex>& b) {
    auto directed = [](const std::vector<Complex>& p, const std::vector<Complex>& q) {
        double worst = 0;
        for (Complex x : p) {
            double best = std::numeric_limits<double>::infinity();
            for (Complex y : q) best = std::min(best, std::norm(x - y));
            worst = std::max(worst, best);
        }
        return std::sqrt(worst);
    };
    return std::max(directed(a, b), directed(b, a));
}

}  // namespace

TEST_CASE("hausdorff distance basics") {
    std::vector<Complex> a{{0, 0}, {1, 0}};
    CHECK(hausdorff_distance(a, a) == 0.0);
    CHECK(hausdorff_distance({{0, 0}}, {{3, 0}}) == 3.0);
    CHECK_THROWS_AS(hausdorff_distance({}, a), input_error);

    // dense segment vs unit circle: distance 1 within sampling resolution
    std::vector<Complex> seg, circle;
    int m = 4000;
    for (int i = 0; i <= m; ++i) seg.push_back({-1.0 + 2.0 * i / m, 0.0});
    for (int i = 0; i < m; ++i) circle.push_back(std::polar(1.0, 2 * std::numbers::pi * i / m));
    CHECK(std::abs(hausdorff_distance(seg, circle) - 1.0) < 2e-3);
}

TEST_CASE("hausdorff matches brute force and is a metric") {
    std::mt19937_64 rng(5);
    for (int iter = 0; iter < 20; ++iter) {
        auto a = random_points(rng, 40 + int(rng() % 60));
        auto b = random_points(rng, 40 + int(rng() % 60));
        auto c = random_points(rng, 40 + int(rng() % 60));
        double dab = hausdorff_distance(a, b);
        CHECK(dab == brute_hausdorff(a, b));
        CHECK(dab == hausdorff_distance(b, a));
        double dac = hausdorff_distance(a, c);
        double dcb = hausdorff_distance(c, b);
        CHECK(dab <= dac + dcb + 1e-12);
    }
}

TEST_CASE("sample points") {
    GeomTree seg = make_segment({0, 0}, {1, 0});
    auto pts = sample_points(seg, 0.5);
    CHECK(pts.size() >= 3);
    bool has0 = false, has1 = false;
    for (Complex p : pts) {
        if (p == Complex{0, 0}) has0 = true;
        if (p == Complex{1, 0}) has1 = true;
    }
    CHECK(has0);
    CHECK(has1);

    auto star = sample_points(make_plus(), 0.1);
    CHECK(star.size() >= 41);

    // midpoint bound: samples at spacing s are within s/2 of the polyline
    auto coarse = sample_points(seg, 0.3);
    auto dense = sample_points(seg, 0.001);
    CHECK(hausdorff_distance(coarse, dense) <= 0.15 + 1e-3);
}

TEST_CASE("segment index equals brute force") {
    GeomTree plus = make_plus();
    SegmentIndex index(flatten_segments(plus));

    auto hit = index.query({2, 0});
    CHECK(hit.dist == 1.0);
    CHECK(plus.edges[hit.edge].to == 1);  // east arm
    CHECK(hit.param == 1.0);
    CHECK(index.query({0, 0}).dist == 0.0);

    std::mt19937_64 rng(19);
    auto u = [&] { return double(rng() >> 11) * 0x1p-53 * 6.0 - 3.0; };
    for (int i = 0; i < 1000; ++i) {
        Complex q{u(), u()};
        auto a = index.query(q);
        auto b = index.query_brute(q);
        CHECK(a.dist == b.dist);
        CHECK(a.segment == b.segment);
        CHECK(a.edge == b.edge);
        CHECK(a.param == b.param);
    }
}

TEST_CASE("similarity alignment") {
    GeomTree plus = make_plus();
    double spacing = plus.diameter() / 512.0;
    auto base = sample_points(plus, spacing);
    std::vector<Complex> target;

    SECTION("translation recovery") {
        for (Complex p : base) target.push_back(p + Complex{5, 5});
        auto res = similarity_align(plus, target);
        CHECK(res.distance < 1e-6 * plus.diameter());
        CHECK(std::abs(res.map.translation - Complex{5, 5}) < 1e-5);
    }

    SECTION("scale and rotation recovery") {
        for (Complex p : base) target.push_back(2.0 * Complex{0, 1} * p);
        auto res = similarity_align(plus, target);
        CHECK(res.distance < 1e-6 * plus.diameter());
        CHECK(std::abs(res.map.scale - 2.0) < 1e-4);
    }

    SECTION("random similarity recovery") {
        std::mt19937_64 rng(23);
        auto u = [&] { return double(rng() >> 11) * 0x1p-53; };
        for (int iter = 0; iter < 3; ++iter) {
            double s = 0.5 + 2.0 * u();
            double th = 2 * std::numbers::pi * u();
            Complex tr{4 * u() - 2, 4 * u() - 2};
            target.clear();
            for (Complex p : base) target.push_back(s * std::polar(1.0, th) * p + tr);
            auto res = similarity_align(plus, target);
            CHECK(res.distance < 1e-6 * plus.diameter());
        }
    }

    SECTION("degenerate target") {
        CHECK_THROWS_AS(similarity_align(plus, {{1, 1}}), input_error);
    }
}

TEST_CASE("derive rotation system") {
    PlaneTree star = derive_rotation_system(make_plus());
    REQUIRE(star.vertex_count == 5);
    // E N W S counterclockwise, as a cyclic order
    auto rot = star.rotations[0];
    REQUIRE(rot.size() == 4);
    std::rotate(rot.begin(), std::find(rot.begin(), rot.end(), 1), rot.end());
    CHECK(rot == std::vector<int>{1, 2, 3, 4});

    GeomTree ell;
    ell.vertices = {{0, 0}, {1, 0}, {1, 1}};
    ell.edges.push_back({0, 1, {{0, 0}, {1, 0}}, ""});
    ell.edges.push_back({1, 2, {{1, 0}, {1, 1}}, ""});
    PlaneTree path = derive_rotation_system(ell);
    CHECK(is_equivalent(path, make_path(2)));

    GeomTree bad;
    bad.vertices = {{0, 0}, {1, 0}, {2, 0}};
    bad.edges.push_back({0, 1, {{0, 0}, {1, 0}}, ""});
    bad.edges.push_back({0, 2, {{0, 0}, {2, 0}}, ""});
    CHECK_THROWS_AS(derive_rotation_system(bad), input_error);
}

TEST_CASE("plant layout realizes the rotation system") {
    for (int n = 1; n <= 6; ++n)
        for (const auto& t : enumerate_plane_trees(n)) {
            GeomTree g = plant_layout(t);
            CHECK(canonical_code(derive_rotation_system(g)) == canonical_code(t));
            validate_geometry(g);
        }
}

TEST_CASE("geometry validation rejects crossings") {
    GeomTree x;
    x.vertices = {{0, 0}, {1, 1}, {1, 0}, {0, 1}, {2, 2}};
    x.edges.push_back({0, 1, {{0, 0}, {1, 1}}, ""});
    x.edges.push_back({1, 4, {{1, 1}, {2, 2}}, ""});
    x.edges.push_back({2, 3, {{1, 0}, {0, 1}}, ""});
    // tree on 5 vertices needs 4 edges; keep combinatorics valid
    x.edges.push_back({3, 4, {{0, 1}, {2, 2}}, ""});
    CHECK_THROWS(validate_geometry(x));

    GeomTree ok = make_plus();
    validate_geometry(ok);
}
