#include <cmath>
#include <numbers>

#include "catch_amalgamated.hpp"
#include "truetree/solve.hpp"

using namespace truetree;

namespace {

Poly chebyshev(int n) {
    Poly t0{1.0}, t1{0.0, 1.0};
    if (n == 0) return t0;
    for (int k = 2; k <= n; ++k) {
        Poly next(k + 1, 0.0);
        for (std::size_t i = 0; i < t1.size(); ++i) next[i + 1] += 2.0 * t1[i];
        for (std::size_t i = 0; i < t0.size(); ++i) next[i] -= t0[i];
        t0 = t1;
        t1 = next;
    }
    return t1;
}

// normalized Chebyshev: T_n(lambda z) with lambda = 2^{(1-n)/n}, monic
Poly normalized_chebyshev(int n) {
    Poly t = chebyshev(n);
    double lambda = std::pow(2.0, (1.0 - n) / double(n));
    double lk = 1.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] *= lk;
        lk *= lambda;
    }
    return t;
}

ShabatPolynomial chebyshev_polynomial(int n) {
    ShabatPolynomial p;
    p.degree = n;
    p.coefficients = chebyshev(n);
    for (int k = 1; k < n; ++k) {
        double x = std::cos(std::numbers::pi * k / n);
        p.critical_points.push_back({Complex(x, 0), 1, (k % 2) ? -1 : 1});
    }
    return p;
}

Eigen::VectorXcd state_of(std::vector<Complex> pts, Complex c0) {
    Eigen::VectorXcd s(pts.size() + 1);
    for (std::size_t i = 0; i < pts.size(); ++i) s(i) = pts[i];
    s(pts.size()) = c0;
    return s;
}

}  // namespace

TEST_CASE("expand closed forms") {
    for (int n : {3, 5, 8}) {
        Poly p = shabat_expand({Complex(0, 0)}, {n - 1}, Complex(-1, 0));
        REQUIRE(static_cast<int>(p.size()) == n + 1);
        CHECK(std::abs(p[0] - Complex(-1, 0)) == 0);
        CHECK(std::abs(p[n] - Complex(1, 0)) == 0);
        for (int j = 1; j < n; ++j) CHECK(std::abs(p[j]) < 1e-15);
    }
    Poly lin = shabat_expand({}, {}, Complex(0, 0));
    CHECK(lin == Poly{Complex(0, 0), Complex(1, 0)});

    Poly quad = shabat_expand({Complex(0, 0)}, {1}, Complex(-1, 0));
    CHECK(std::abs(poly_eval(quad, std::sqrt(2.0)) - 1.0) < 1e-14);

    // derivative identity: expand' = n * prod (z - a_v)^{deg-1}
    std::vector<Complex> pts{{0.3, 0.1}, {-0.4, 0.2}};
    std::vector<int> mults{2, 1};
    Poly p = shabat_expand(pts, mults, Complex(0.5, -0.25));
    Poly dp = poly_derivative(p);
    for (int s = 0; s < 20; ++s) {
        Complex z = std::polar(1.3, 0.31 * s);
        Complex lhs = poly_eval(dp, z);
        Complex rhs = 4.0 * (z - pts[0]) * (z - pts[0]) * (z - pts[1]);
        CHECK(std::abs(lhs - rhs) < 1e-12 * std::max(1.0, std::abs(rhs)));
    }
}

TEST_CASE("residual at closed-form solutions") {
    PlaneTree star = make_star(3);
    ShabatSystem sys(star, bipartite_coloring(star, 0));
    auto r = sys.residual(state_of({Complex(0, 0)}, Complex(-1, 0)));
    CHECK(r.cwiseAbs().maxCoeff() < 1e-15);

    PlaneTree path = make_path(3);
    ShabatSystem psys(path, bipartite_coloring(path, 0));
    double a = 0.5 * std::pow(4.0, 1.0 / 3.0);
    auto pr = psys.residual(state_of({Complex(a, 0), Complex(-a, 0)}, Complex(0, 0)));
    CHECK(pr.cwiseAbs().maxCoeff() < 1e-12);

    // first-order consistency in a perturbation
    double h = 1e-6;
    auto base = psys.residual(state_of({Complex(a, 0), Complex(-a, 0)}, Complex(0, 0)));
    auto pert = psys.residual(state_of({Complex(a + h, 0), Complex(-a, 0)}, Complex(0, 0)));
    CHECK((pert - base).cwiseAbs().maxCoeff() < 50 * h);
}

TEST_CASE("jacobian matches central differences") {
    detail::WalkerRng rng(2024, 1);
    for (int n = 1; n <= 6; ++n) {
        for (const auto& tree : enumerate_plane_trees(n)) {
            ShabatSystem sys(tree, bipartite_coloring(tree, 0));
            int k = sys.unknowns() - 1;
            Eigen::VectorXcd state(k + 1);
            for (int i = 0; i < k; ++i)
                state(i) = Complex(2 * rng.uniform() - 1, 2 * rng.uniform() - 1);
            state(k) = Complex(2 * rng.uniform() - 1, 2 * rng.uniform() - 1);
            if (!detail::points_distinct(state, k)) continue;

            Eigen::MatrixXcd J = sys.jacobian(state);
            double h = 1e-7;
            double scale = J.cwiseAbs().maxCoeff();
            for (int v = 0; v <= k; ++v) {
                Eigen::VectorXcd sp = state, sm = state;
                sp(v) += h;
                sm(v) -= h;
                Eigen::VectorXcd col = (sys.residual(sp) - sys.residual(sm)) / (2 * h);
                for (int w = 0; w <= k; ++w)
                    CHECK(std::abs(col(w) - J(w, v)) < 1e-5 * std::max(1.0, scale));
            }
        }
    }

    // 1-edge tree: the system is c0 alone with unit jacobian
    PlaneTree single = make_path(1);
    ShabatSystem ssys(single, bipartite_coloring(single, 0));
    Eigen::VectorXcd s(1);
    s(0) = Complex(0.3, -0.2);
    CHECK(std::abs(ssys.jacobian(s)(0, 0) - 1.0) == 0);
    CHECK(std::abs(ssys.residual(s)(0) - Complex(0.3, -0.2)) == 0);
}

TEST_CASE("newton solve on the star") {
    PlaneTree star = make_star(3);
    ShabatSystem sys(star, bipartite_coloring(star, 0));
    SolveOptions opts;
    NewtonOutcome res = newton_solve(sys, state_of({Complex(0.1, 0.2)}, Complex(-0.9, 0)), opts);
    REQUIRE(res.ok);
    CHECK(std::abs(res.state(0)) < 1e-10);
    CHECK(std::abs(res.state(1) - Complex(-1, 0)) < 1e-10);

    NewtonOutcome again = newton_solve(sys, res.state, opts);
    CHECK(again.ok);
    CHECK(again.iterations == 0);
}

TEST_CASE("normalize") {
    ShabatPolynomial p;
    p.degree = 3;
    p.coefficients = {Complex(-1, 0), Complex(0, 0), Complex(0, 0), Complex(2, 0)};
    p.critical_points = {{Complex(0, 0), 2, -1}};
    ShabatPolynomial q = normalize(p);
    CHECK(std::abs(q.coefficients[3] - 1.0) < 1e-15);
    CHECK(std::abs(q.coefficients[0] + 1.0) < 1e-15);
    CHECK(std::abs(q.coefficients[1]) + std::abs(q.coefficients[2]) < 1e-15);
    CHECK(q.normalization.scale == Catch::Approx(std::pow(2.0, -1.0 / 3.0)));

    ShabatPolynomial qq = normalize(q);
    CHECK(qq.normalization.scale == Catch::Approx(1.0));
    CHECK(std::abs(qq.normalization.translation) < 1e-15);
}

TEST_CASE("compare up to similarity") {
    PlaneTree star = make_star(3);
    ShabatPolynomial p = solve(star);

    // p precomposed with a similarity: rebuild from transformed critical points
    Complex lambda = std::polar(1.7, 0.6);
    Complex mu{0.3, -0.8};
    ShabatPolynomial q;
    q.degree = p.degree;
    std::vector<Complex> pts;
    std::vector<int> mults;
    for (auto c : p.critical_points) {
        pts.push_back(lambda * c.position + mu);
        mults.push_back(c.multiplicity);
        q.critical_points.push_back({pts.back(), c.multiplicity, c.target});
    }
    // q(z) = p((z - mu)/lambda) has leading coefficient lambda^{-n}; build its
    // coefficient vector through the same integral construction
    Poly prod = poly_from_roots(pts, mults);
    Poly integ = poly_integral(prod);
    Complex lead = std::pow(lambda, -3.0);
    q.coefficients.assign(4, 0.0);
    for (int i = 1; i <= 3; ++i) q.coefficients[i] = 3.0 * lead * integ[i];
    q.coefficients[0] = poly_eval(p.coefficients, -mu / lambda);
    CHECK(compare_up_to_similarity(p, q) < 1e-10);

    ShabatPolynomial path = solve(make_path(3));
    CHECK(compare_up_to_similarity(p, path) > 0.1);
    CHECK_THROWS_AS(compare_up_to_similarity(p, solve(make_path(4))), input_error);
}

TEST_CASE("solve closed forms") {
    for (int n : {3, 4, 5}) {
        ShabatPolynomial p = normalize(solve(make_star(n)));
        Poly expect(n + 1, 0.0);
        expect[0] = -1;
        expect[n] = 1;
        ShabatPolynomial ref;
        ref.degree = n;
        ref.coefficients = expect;
        ref.critical_points = {{Complex(0, 0), n - 1, -1}};
        CHECK(compare_up_to_similarity(p, ref) < 1e-10);
    }

    for (int n : {2, 3, 4}) {
        ShabatPolynomial pn = solve(make_path(n));
        ShabatPolynomial ref;
        ref.degree = n;
        ref.coefficients = normalized_chebyshev(n);
        double lambda = std::pow(2.0, (1.0 - n) / double(n));
        for (int k = 1; k < n; ++k)
            ref.critical_points.push_back(
                {Complex(std::cos(std::numbers::pi * k / n) / lambda, 0), 1, (k % 2) ? -1 : 1});
        CHECK(compare_up_to_similarity(pn, ref) < 1e-10);
    }

    ShabatPolynomial one = solve(make_path(1));
    CHECK(one.degree == 1);
    CHECK(std::abs(one.coefficients[0]) == 0);
    CHECK(std::abs(one.coefficients[1] - 1.0) == 0);
}

TEST_CASE("independent solves agree") {
    auto trees = enumerate_plane_trees(5);
    const PlaneTree& tree = trees[3];
    GeomTree h1 = plant_layout(tree);
    GeomTree h2 = plant_layout(tree, 1234);
    ShabatPolynomial a = solve(tree, &h1);
    ShabatPolynomial b = solve(tree, &h2);
    CHECK(compare_up_to_similarity(a, b) < 1e-8);
}

TEST_CASE("tracer vertices and directions") {
    ShabatPolynomial cube = solve(make_star(3));
    auto vs = vertices(cube);
    REQUIRE(vs.size() == 4);
    int center = -1;
    for (std::size_t i = 0; i < vs.size(); ++i)
        if (vs[i].degree == 3) center = static_cast<int>(i);
    REQUIRE(center >= 0);
    CHECK(std::abs(vs[center].position) < 1e-9);
    CHECK(vs[center].value == -1);
    for (std::size_t i = 0; i < vs.size(); ++i)
        if (static_cast<int>(i) != center) {
            CHECK(vs[i].degree == 1);
            CHECK(vs[i].value == 1);
            CHECK(std::abs(std::abs(vs[i].position) - std::pow(2.0, 1.0 / 3.0)) < 1e-9);
        }

    // directions of z^2 - 1 at 0: the segment through the origin
    ShabatPolynomial sq;
    sq.degree = 2;
    sq.coefficients = {Complex(-1, 0), Complex(0, 0), Complex(1, 0)};
    sq.critical_points = {{Complex(0, 0), 1, -1}};
    auto dirs = local_directions(sq, {0, 0}, -1, 2);
    REQUIRE(dirs.size() == 2);
    CHECK(dirs[0] == Catch::Approx(0.0).margin(1e-12));
    CHECK(dirs[1] == Catch::Approx(std::numbers::pi));

    auto dirs3 = local_directions(cube, {0, 0}, -1, 3);
    REQUIRE(dirs3.size() == 3);
    for (int k = 0; k < 3; ++k) CHECK(dirs3[k] == Catch::Approx(2 * std::numbers::pi * k / 3).margin(1e-9));

    ShabatPolynomial lin = solve(make_path(1));
    auto v1 = vertices(lin);
    REQUIRE(v1.size() == 2);
    CHECK(v1.front().position == Complex(-1, 0));
    CHECK(v1.back().position == Complex(1, 0));
}

TEST_CASE("tracing single edges") {
    ShabatPolynomial sq;
    sq.degree = 2;
    sq.coefficients = {Complex(-1, 0), Complex(0, 0), Complex(1, 0)};
    sq.critical_points = {{Complex(0, 0), 1, -1}};
    EdgeTrace tr = trace_edge(sq, {0, 0}, -1, 2, 0.0);
    CHECK(std::abs(tr.polyline.back() - Complex(std::sqrt(2.0), 0)) < 1e-8);
    for (Complex z : tr.polyline) CHECK(std::abs(z.imag()) < 1e-9);

    ShabatPolynomial cheb = chebyshev_polynomial(3);
    EdgeTrace mid = trace_edge(cheb, {0.5, 0}, -1, 2, std::numbers::pi);
    CHECK(std::abs(mid.polyline.back() - Complex(-0.5, 0)) < 1e-8);
    for (Complex z : mid.polyline) CHECK(std::abs(z.imag()) < 1e-9);

    // both ends trace the same branch: align by the parameter (interpolate,
    // then re-solve p(w) = t from the interpolant) and compare pointwise
    EdgeTrace rev = trace_edge(cheb, {-0.5, 0}, 1, 2, 0.0);
    Poly dcheb = poly_derivative(cheb.coefficients);
    for (std::size_t i = 1; i + 1 < mid.polyline.size(); ++i) {
        double t = mid.params[i];
        std::size_t j = 0;
        bool found = false;
        for (; j + 1 < rev.params.size(); ++j) {
            double t0 = rev.params[j], t1 = rev.params[j + 1];
            if ((t0 - t) * (t1 - t) <= 0 && t0 != t1) {
                found = true;
                break;
            }
        }
        if (!found) continue;
        double t0 = rev.params[j], t1 = rev.params[j + 1];
        double w = (t - t0) / (t1 - t0);
        Complex z = rev.polyline[j] + w * (rev.polyline[j + 1] - rev.polyline[j]);
        for (int it = 0; it < 30; ++it) {
            Complex f = poly_eval(cheb.coefficients, z) - t;
            if (std::abs(f) < 1e-14) break;
            z -= f / poly_eval(dcheb, z);
        }
        CHECK(std::abs(z - mid.polyline[i]) < 1e-8);
    }
}

TEST_CASE("trace whole trees") {
    for (int n : {3, 5, 8}) {
        ShabatPolynomial p = solve(make_star(n));
        TracedTree t = trace_tree(p);
        CHECK(is_equivalent(t.combinatorics, make_star(n)));
        for (std::size_t e = 0; e < t.geom.edges.size(); ++e) {
            Complex tip = t.geom.edges[e].polyline.back();
            if (t.degrees[t.geom.edges[e].to] == 1)
                CHECK(std::abs(std::abs(tip) - std::pow(2.0, 1.0 / n)) < 1e-7);
        }
    }
    for (int n : {2, 4, 7}) {
        ShabatPolynomial p = solve(make_path(n));
        TracedTree t = trace_tree(p);
        CHECK(is_equivalent(t.combinatorics, make_path(n)));
    }
}

TEST_CASE("exhaustive solve and round trip up to 5 edges") {
    for (int n = 1; n <= 5; ++n)
        for (const auto& tree : enumerate_plane_trees(n)) {
            ShabatPolynomial p = solve(tree);
            CHECK(p.residual <= 1e-12);
            TracedTree traced = trace_tree(p);
            CHECK(is_equivalent(tree, traced.combinatorics));
            validate_geometry(traced.geom);
        }
}
