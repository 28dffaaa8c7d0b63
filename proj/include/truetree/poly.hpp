#pragma once

// Complex polynomial helpers: arithmetic on coefficient vectors (ascending
// powers), Gauss-Legendre rules, and an Aberth-Ehrlich all-roots finder with
// multiplicity clustering.

#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <vector>

#include "truetree/errors.hpp"

namespace truetree {

using Poly = std::vector<std::complex<double>>;  // ascending coefficients

inline std::complex<double> poly_eval(const Poly& p, std::complex<double> z) {
    std::complex<double> acc = 0;
    for (std::size_t i = p.size(); i-- > 0;) acc = acc * z + p[i];
    return acc;
}

inline Poly poly_derivative(const Poly& p) {
    Poly d;
    for (std::size_t i = 1; i < p.size(); ++i) d.push_back(double(i) * p[i]);
    if (d.empty()) d.push_back(0);
    return d;
}

// term-wise antiderivative with zero constant term
inline Poly poly_integral(const Poly& p) {
    Poly q(p.size() + 1, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) q[i + 1] = p[i] / double(i + 1);
    return q;
}

inline Poly poly_mul(const Poly& a, const Poly& b) {
    Poly c(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) c[i + j] += a[i] * b[j];
    return c;
}

// prod over (z - root)^multiplicity
inline Poly poly_from_roots(const std::vector<std::complex<double>>& roots,
                            const std::vector<int>& multiplicities) {
    Poly p{1.0};
    for (std::size_t i = 0; i < roots.size(); ++i)
        for (int m = 0; m < multiplicities[i]; ++m) p = poly_mul(p, Poly{-roots[i], 1.0});
    return p;
}

struct GaussLegendre {
    std::vector<double> nodes;    // on [-1, 1]
    std::vector<double> weights;
};

// Newton iteration on Legendre roots; cached per order.
inline const GaussLegendre& gauss_legendre(int order) {
    static std::map<int, GaussLegendre> cache;
    auto it = cache.find(order);
    if (it != cache.end()) return it->second;
    GaussLegendre rule;
    rule.nodes.resize(order);
    rule.weights.resize(order);
    for (int i = 0; i < order; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1, p1 = x;
            for (int k = 2; k <= order; ++k) {
                double pk = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            double dp = order * (x * p1 - p0) / (x * x - 1);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        double p0 = 1, p1 = x;
        for (int k = 2; k <= order; ++k) {
            double pk = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
            p0 = p1;
            p1 = pk;
        }
        double dp = order * (x * p1 - p0) / (x * x - 1);
        rule.nodes[i] = x;
        rule.weights[i] = 2.0 / ((1 - x * x) * dp * dp);
    }
    return cache.emplace(order, std::move(rule)).first->second;
}

// Simultaneous iteration for all roots. Multiple roots converge as clusters;
// pair with cluster_roots below.
inline std::vector<std::complex<double>> aberth_roots(const Poly& poly, double tol = 1e-13,
                                                      int max_iters = 400) {
    Poly p = poly;
    while (p.size() > 1 && std::abs(p.back()) == 0) p.pop_back();
    int n = static_cast<int>(p.size()) - 1;
    if (n < 1) return {};
    Poly dp = poly_derivative(p);

    double radius = 0;
    for (int i = 0; i < n; ++i) radius = std::max(radius, std::abs(p[i] / p.back()));
    radius = 1.0 + radius;  // Cauchy bound

    std::vector<std::complex<double>> z(n);
    for (int i = 0; i < n; ++i)
        z[i] = std::polar(radius * 0.5, 2 * std::numbers::pi * i / n + 0.41);

    for (int iter = 0; iter < max_iters; ++iter) {
        double worst = 0;
        for (int i = 0; i < n; ++i) {
            std::complex<double> pv = poly_eval(p, z[i]);
            std::complex<double> dv = poly_eval(dp, z[i]);
            std::complex<double> w = (dv != 0.0) ? pv / dv : std::complex<double>(tol, 0);
            std::complex<double> rep = 0;
            for (int j = 0; j < n; ++j)
                if (j != i) {
                    std::complex<double> diff = z[i] - z[j];
                    if (std::abs(diff) < 1e-300) diff = 1e-300;
                    rep += 1.0 / diff;
                }
            std::complex<double> denom = 1.0 - w * rep;
            std::complex<double> step = (std::abs(denom) > 1e-300) ? w / denom : w;
            z[i] -= step;
            worst = std::max(worst, std::abs(step));
        }
        if (worst < tol * std::max(1.0, radius)) return z;
    }
    // multiple roots only converge linearly; accept the cluster if residuals
    // are small enough, otherwise give up
    for (auto& zi : z)
        if (!std::isfinite(zi.real()) || !std::isfinite(zi.imag()))
            throw numerical_error("root finder did not converge");
    return z;
}

struct RootCluster {
    std::complex<double> position;
    int multiplicity;
};

// Groups roots within rel_radius * scale of each other (single-link).
inline std::vector<RootCluster> cluster_roots(const std::vector<std::complex<double>>& roots,
                                              double rel_radius = 1e-6) {
    if (roots.empty()) return {};
    double scale = 0;
    for (auto r : roots) scale = std::max(scale, std::abs(r));
    scale = std::max(scale, 1.0);
    double eps = rel_radius * scale;

    int n = static_cast<int>(roots.size());
    std::vector<int> parent(n);
    for (int i = 0; i < n; ++i) parent[i] = i;
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (std::abs(roots[i] - roots[j]) <= eps) parent[find(i)] = find(j);

    std::map<int, RootCluster> groups;
    for (int i = 0; i < n; ++i) {
        auto& g = groups[find(i)];
        g.position += roots[i];
        ++g.multiplicity;
    }
    std::vector<RootCluster> out;
    for (auto& [root, g] : groups) {
        g.position /= double(g.multiplicity);
        out.push_back(g);
    }
    std::sort(out.begin(), out.end(), [](const RootCluster& a, const RootCluster& b) {
        if (a.position.real() != b.position.real()) return a.position.real() < b.position.real();
        return a.position.imag() < b.position.imag();
    });
    return out;
}

}  // namespace truetree
