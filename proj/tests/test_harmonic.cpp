#include <cmath>
#include <numbers>

#include "catch_amalgamated.hpp"
#include "truetree/harmonic.hpp"

using namespace truetree;

namespace {

GeomTree segment_tree() {
    GeomTree t;
    t.vertices = {{-1, 0}, {1, 0}};
    t.edges.push_back({0, 1, {{-1, 0}, {1, 0}}, ""});
    return t;
}

GeomTree plus_tree(double arm) {
    GeomTree t;
    t.vertices = {{0, 0}, {arm, 0}, {0, arm}, {-arm, 0}, {0, -arm}};
    for (int i = 1; i <= 4; ++i) t.edges.push_back({0, i, {t.vertices[0], t.vertices[i]}, ""});
    return t;
}

}  // namespace

TEST_CASE("segment sides are symmetric and follow the arcsine law") {
    WalkConfig cfg;
    cfg.seed = 42;
    cfg.record_positions = true;
    const std::uint64_t walkers = 200000;
    MeasureTable table = estimate_measures(segment_tree(), cfg, walkers);

    double total = double(walkers - table.discarded);
    CHECK(table.discarded <= walkers / 1000);

    double sum = 0;
    for (int side = 0; side < 2; ++side) {
        const auto& s = table.at(0, side);
        sum += s.measure;
        double sigma = std::sqrt(0.25 / total);
        CHECK(std::abs(s.measure - 0.5) < 4 * sigma);

        // conditional hitting CDF along the edge: F(x) = 1/2 + asin(2x-1)/pi
        double ks = ks_distance(s.positions, [](double x) {
            return 0.5 + std::asin(std::clamp(2 * x - 1, -1.0, 1.0)) / std::numbers::pi;
        });
        CHECK(ks < 0.01);
    }
    CHECK(sum == 1.0);
}

TEST_CASE("plus tree: eight equal side measures") {
    WalkConfig cfg;
    cfg.seed = 7;
    const std::uint64_t walkers = 200000;
    // the true form of the 4-star: four straight arms of equal length
    MeasureTable table = estimate_measures(plus_tree(std::pow(2.0, 0.25)), cfg, walkers);
    double total = double(walkers - table.discarded);
    double sigma = std::sqrt(0.125 * 0.875 / total);
    for (int e = 0; e < 4; ++e)
        for (int side = 0; side < 2; ++side)
            CHECK(std::abs(table.at(e, side).measure - 0.125) < 4 * sigma);
}

TEST_CASE("walk determinism") {
    WalkConfig cfg;
    cfg.seed = 99;
    cfg.threads = 2;
    MeasureTable a = estimate_measures(plus_tree(1.0), cfg, 20000);
    MeasureTable b = estimate_measures(plus_tree(1.0), cfg, 20000);
    cfg.threads = 1;
    MeasureTable c = estimate_measures(plus_tree(1.0), cfg, 20000);
    for (int e = 0; e < 4; ++e)
        for (int s = 0; s < 2; ++s) {
            CHECK(a.at(e, s).hits == b.at(e, s).hits);
            CHECK(a.at(e, s).hits == c.at(e, s).hits);
            CHECK(a.at(e, s).histogram == c.at(e, s).histogram);
            CHECK(a.at(e, s).measure == c.at(e, s).measure);
        }
    CHECK(a.discarded == c.discarded);
}

TEST_CASE("cumulative estimates") {
    WalkConfig cfg;
    cfg.seed = 5;
    MeasureTable table = estimate_measures(segment_tree(), cfg, 60000);
    EdgeSideCDF cdf = estimate_cumulative(table, 0, 0);

    CHECK(cdf.f.front() == 0.0);
    CHECK(cdf.f.back() == Catch::Approx(table.at(0, 0).measure));
    for (std::size_t i = 1; i < cdf.f.size(); ++i) CHECK(cdf.f[i] >= cdf.f[i - 1]);

    // symmetric edge: F(x) + F(1-x) = total within statistical noise
    for (double x : {0.1, 0.25, 0.4}) {
        double lhs = cdf.value(x) + cdf.value(1 - x);
        CHECK(std::abs(lhs - cdf.total) < 0.02 * cdf.total);
    }

    // inverse round-trips
    for (double frac : {0.1, 0.5, 0.9}) {
        double pos = cdf.inverse(frac);
        CHECK(cdf.value(pos) == Catch::Approx(frac * cdf.total).margin(1e-12));
    }

    MeasureTable tiny = estimate_measures(segment_tree(), cfg, 50);
    CHECK_THROWS_AS(estimate_cumulative(tiny, 0, 0), numerical_error);
}

TEST_CASE("summary statistics") {
    WalkConfig cfg;
    cfg.seed = 3;
    MeasureTable table = estimate_measures(plus_tree(1.0), cfg, 100000);
    BalanceSummary s = summarize(table);
    CHECK(s.ratio_edges_used == 4);
    CHECK(s.max_side_ratio_dev < 0.05);
    CHECK(s.edge_measure_cv < 0.02);
    CHECK(s.total_measure == 1.0);
}
