#pragma once

// Reconstructs T = p^{-1}([-1,1]) from a Shabat polynomial: vertices, local
// edge directions, and edge polylines by predictor-corrector continuation in
// the parameter t = p(z).

#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <vector>

#include "truetree/errors.hpp"
#include "truetree/geom_tree.hpp"
#include "truetree/plane_tree.hpp"
#include "truetree/poly.hpp"
#include "truetree/shabat.hpp"

namespace truetree {

struct TracedVertex {
    Complex position{0, 0};
    int value = 1;  // +1 or -1
    int degree = 1;
};

struct TracedTree {
    GeomTree geom;
    std::vector<int> values;                        // per vertex
    std::vector<int> degrees;                       // per vertex
    std::vector<std::vector<double>> edge_params;   // t samples per edge
    PlaneTree combinatorics;
    double max_correction = 0;  // worst |p(z) - t| accepted along any polyline
};

namespace detail {

struct PolyEvaluator {
    int n = 1;
    Complex lead{1, 0};
    Complex c0{0, 0};
    std::vector<Complex> pts;
    std::vector<int> mults;
    bool use_coeffs = true;
    Poly coeffs, dcoeffs;
    std::vector<Complex> integrals;  // chain-accumulated Integral_0^{a_i} of the product

    explicit PolyEvaluator(const ShabatPolynomial& p, int coeff_threshold = 10) {
        n = p.degree;
        lead = p.coefficients.back();
        c0 = p.coefficients.front();
        for (const auto& c : p.critical_points) {
            pts.push_back(c.position);
            mults.push_back(c.multiplicity);
        }
        use_coeffs = n <= coeff_threshold;
        coeffs = p.coefficients;
        dcoeffs = poly_derivative(coeffs);
        if (!use_coeffs && !pts.empty()) {
            auto chain = build_eval_chain(pts);
            integrals.assign(pts.size(), Complex(0, 0));
            for (int idx : chain.order) {
                Complex from = chain.parent[idx] < 0 ? Complex(0, 0) : pts[chain.parent[idx]];
                Complex base = chain.parent[idx] < 0 ? Complex(0, 0) : integrals[chain.parent[idx]];
                integrals[idx] =
                    base + product_segment_integral(pts, mults, n, from, pts[idx], false).base;
            }
        }
    }

    Complex value(Complex z) const {
        if (use_coeffs) return poly_eval(coeffs, z);
        // anchor the integral at the nearest critical point to keep the
        // integrand tame along the segment
        int anchor = -1;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < pts.size(); ++i)
            if (std::abs(z - pts[i]) < best) {
                best = std::abs(z - pts[i]);
                anchor = static_cast<int>(i);
            }
        Complex from = anchor < 0 ? Complex(0, 0) : pts[anchor];
        Complex base = anchor < 0 ? Complex(0, 0) : integrals[anchor];
        Complex tail = product_segment_integral(pts, mults, n, from, z, false).base;
        return c0 + double(n) * lead * (base + tail);
    }
    Complex derivative(Complex z) const {
        if (use_coeffs) return poly_eval(dcoeffs, z);
        return double(n) * lead * product_value(pts, mults, z);
    }
};

struct InternalVertex {
    Complex position;
    int value;
    int degree;
    Complex lead_coeff;               // c_d in p(z) = eps + c_d (z-a)^d + ...
    std::vector<double> directions;   // d edge directions, ccw
    double switch_radius;             // local-model handover radius
    double switch_band;               // |t - eps| scale at switch_radius
};

inline double angle_diff(double a, double b) {
    double d = std::fmod(a - b, 2 * std::numbers::pi);
    if (d > std::numbers::pi) d -= 2 * std::numbers::pi;
    if (d < -std::numbers::pi) d += 2 * std::numbers::pi;
    return std::abs(d);
}

inline std::vector<double> direction_angles(Complex lead_coeff, int value, int degree) {
    double target = value == 1 ? std::numbers::pi : 0.0;
    std::vector<double> out(degree);
    for (int k = 0; k < degree; ++k) {
        double th = (target - std::arg(lead_coeff) + 2 * std::numbers::pi * k) / degree;
        th = std::fmod(th, 2 * std::numbers::pi);
        if (th < 0) th += 2 * std::numbers::pi;
        out[k] = th;
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<InternalVertex> internal_vertices(const ShabatPolynomial& p,
                                                     const PolyEvaluator& eval) {
    std::vector<InternalVertex> out;
    const auto& cps = p.critical_points;
    for (std::size_t i = 0; i < cps.size(); ++i) {
        InternalVertex v;
        v.position = cps[i].position;
        v.value = cps[i].target;
        v.degree = cps[i].multiplicity + 1;
        // c_d = n * lead * prod_{u != i} (a_i - a_u)^{m_u} / d
        Complex q = 1.0;
        {
            double lm = 0, ph = 0;
            for (std::size_t u = 0; u < cps.size(); ++u) {
                if (u == i) continue;
                Complex d = cps[i].position - cps[u].position;
                lm += cps[u].multiplicity * std::log(std::abs(d));
                ph += cps[u].multiplicity * std::arg(d);
            }
            q = std::exp(lm) * std::polar(1.0, ph);
        }
        v.lead_coeff = double(p.degree) * eval.lead * q / double(v.degree);
        v.directions = direction_angles(v.lead_coeff, v.value, v.degree);
        double minsep = std::numeric_limits<double>::infinity();
        for (std::size_t u = 0; u < cps.size(); ++u)
            if (u != i) minsep = std::min(minsep, std::abs(cps[i].position - cps[u].position));
        double cap = 0.8 * (1.0 + std::abs(v.position));
        v.switch_radius = std::min(0.25 * minsep, cap);
        v.switch_band = std::abs(v.lead_coeff) * std::pow(v.switch_radius, v.degree);
        out.push_back(v);
    }
    return out;
}

struct TraceSettings {
    double corr_tol = 1e-11;
    double dt_min = 1e-12;
    long max_steps = 200000;
};

struct TraceOutcome {
    std::vector<Complex> polyline;
    std::vector<double> params;
    int end_internal = -1;  // index into the internal list, -1 for a leaf
    int arrival_slot = -1;
    Complex leaf{0, 0};
    double max_correction = 0;
    // the march ran into a numerically flat basin (|p -+ 1| below double
    // resolution) and could not progress; the partner trace from the other
    // end of the edge is expected to cover it
    bool stalled = false;
};

// Newton correction onto p(z) = t.
inline bool correct(const PolyEvaluator& eval, Complex& z, double t, double tol, int iters,
                    double* achieved = nullptr) {
    for (int i = 0; i < iters; ++i) {
        Complex pv = eval.value(z) - t;
        double err = std::abs(pv);
        if (achieved) *achieved = err;
        if (err <= tol) return true;
        Complex dv = eval.derivative(z);
        if (dv == 0.0 || !std::isfinite(std::abs(dv))) return false;
        Complex step = pv / dv;
        if (!std::isfinite(std::abs(step))) return false;
        z -= step;
    }
    Complex pv = eval.value(z) - t;
    double err = std::abs(pv);
    if (achieved) *achieved = err;
    return err <= tol;
}

// Arclength continuation of the curve Im p = 0 from a vertex corner. The
// parameter t = p(z) only monitors progress: high-degree polynomials are
// numerically flat around clustered vertices (|t| pinned at 1 to machine
// precision), so steps are driven by geometry and re-anchored onto the curve
// by correcting to t = Re p(predictor).
inline TraceOutcome trace_from(const PolyEvaluator& eval,
                               const std::vector<InternalVertex>& internals, int from,
                               int dir_slot, const TraceSettings& settings) {
#ifdef TT_TRACE_VERBOSE
    std::fprintf(stderr, "[trace] v%d slot %d\n", from, dir_slot);
#endif
    const InternalVertex& A = internals[from];
    int eps = A.value;
    double theta = A.directions[dir_slot];

    TraceOutcome out;
    out.polyline.push_back(A.position);
    out.params.push_back(eps);

    double scale = 1.0 + std::abs(A.position);
    double r_exit = A.switch_radius;
    double corr = settings.corr_tol;

    // radius ladder out of the vertex along the exact local direction
    Complex z = A.position;
    double t_cur = eps;
    for (double r = r_exit / 64; r <= r_exit * (1 + 1e-12); r *= 2) {
        Complex zm = A.position + std::polar(r, theta);
        double tm = std::clamp(eval.value(zm).real(), -1.0, 1.0);
        double got = 0;
        correct(eval, zm, tm, corr * (1 + std::abs(tm)), 8, &got);
        out.max_correction = std::max(out.max_correction, got);
        out.polyline.push_back(zm);
        out.params.push_back(tm);
        z = zm;
        t_cur = tm;
    }

    Complex tangent = std::polar(1.0, theta);
    double h = r_exit / 4;
    const double h_min = 1e-13 * scale;
    double checkpoint_t = t_cur;  // parameter progress audit

    auto try_finish_at = [&](std::size_t j) -> bool {
        // descend into vertex j along its nearest direction; abort if the
        // monitor moves the wrong way (an edge merely passing nearby)
        const InternalVertex& B = internals[j];
        double phi = std::arg(z - B.position);
        int slot = 0;
        double best = std::numeric_limits<double>::infinity();
        for (int k2 = 0; k2 < B.degree; ++k2) {
            double diff = angle_diff(phi, B.directions[k2]);
            if (diff < best) {
                best = diff;
                slot = k2;
            }
        }
        std::vector<Complex> pl;
        std::vector<double> pr;
        double prev_gap = std::abs(t_cur - B.value);
        double final_gap = prev_gap;
        for (double r = std::abs(z - B.position) * 0.5; r > 1e-10 * scale; r *= 0.5) {
            Complex zm = B.position + std::polar(r, B.directions[slot]);
            double tm = std::clamp(eval.value(zm).real(), -1.0, 1.0);
            double gap = std::abs(tm - B.value);
            // gaps may plateau in flat basins but must never grow
            if (gap > prev_gap + 1e-6) return false;
            double got = 0;
            correct(eval, zm, tm, corr * (1 + std::abs(tm)), 8, &got);
            out.max_correction = std::max(out.max_correction, got);
            pl.push_back(zm);
            pr.push_back(tm);
            prev_gap = gap;
            final_gap = gap;
        }
        if (final_gap > 0.5) return false;  // never actually approached B
        for (std::size_t q = 0; q < pl.size(); ++q) {
            out.polyline.push_back(pl[q]);
            out.params.push_back(pr[q]);
        }
        out.polyline.push_back(B.position);
        out.params.push_back(B.value);
        out.end_internal = static_cast<int>(j);
        out.arrival_slot = slot;
        return true;
    };

    for (long step = 0; step < settings.max_steps; ++step) {
        // endpoint switch: inside the local zone of an opposite-value vertex,
        // or anywhere the monitor is pinned at the endpoint value and the
        // vertex is the nearest one (flat basins extend far past the zone)
        std::size_t nearest = 0;
        double nearest_d = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < internals.size(); ++j)
            if (std::abs(z - internals[j].position) < nearest_d) {
                nearest_d = std::abs(z - internals[j].position);
                nearest = j;
            }
        for (std::size_t j = 0; j < internals.size(); ++j) {
            const InternalVertex& B = internals[j];
            if (B.value != -eps) continue;
            bool in_zone = std::abs(z - B.position) < B.switch_radius;
            bool pinned = j == nearest && std::abs(t_cur - B.value) < 1e-6;
            if (!in_zone && !pinned) continue;
            if (try_finish_at(j)) return out;
        }

        // leaf ending: monitor next to -eps and no internal vertex in sight
        if (std::abs(t_cur - (-eps)) < 1e-3) {
            Complex zl = z;
            double got = 0;
            if (correct(eval, zl, -eps, corr * 2, 12, &got) &&
                std::abs(zl - z) < 8 * h + 1e-6 * scale) {
                bool near_internal = false;
                for (const auto& iv : internals)
                    if (std::abs(zl - iv.position) < 0.5 * iv.switch_radius) near_internal = true;
                if (!near_internal) {
                    out.max_correction = std::max(out.max_correction, got);
                    out.polyline.push_back(zl);
                    out.params.push_back(-eps);
                    out.end_internal = -1;
                    out.leaf = zl;
                    return out;
                }
            }
        }

        Complex dp = eval.derivative(z);
        if (dp != 0.0) {
            Complex tau = std::conj(dp) / std::abs(dp);
            if (dot(tau, tangent) < 0) tau = -tau;
            tangent = tau;
        }
        Complex cand = z + h * tangent;
        double tm = std::clamp(eval.value(cand).real(), -1.0, 1.0);
        double got = 0;
        bool ok = correct(eval, cand, tm, corr * (1 + std::abs(tm)), 6, &got);
        bool sharp = false;
        bool backward = false;
        if (ok) {
            Complex step_dir = cand - z;
            if (std::abs(step_dir) > 1e-3 * h) {
                sharp = angle_diff(std::arg(step_dir), std::arg(tangent)) > 0.45;
                backward = dot(step_dir, tangent) < 0;
            }
            // the monitor may creep on plateaus but must never reverse sign
            // of progress by more than the correction tolerance
            if (eps * (tm - t_cur) > 1e-6) backward = true;
        }
        if (!ok || sharp || backward) {
#ifdef TT_TRACE_VERBOSE
            std::fprintf(stderr, "  [fail %ld] t=%.9f h=%.3g ok=%d sharp=%d back=%d got=%.3g z=(%.5f,%.5f)\n",
                         step, t_cur, h, int(ok), int(sharp), int(backward), got, z.real(), z.imag());
#endif
            h *= 0.5;
            if (h < h_min) {
                if (std::abs(t_cur) > 1 - 1e-4) {
                    out.stalled = true;  // lost in a flat basin
                    return out;
                }
                throw numerical_error("trace step collapse (wrong polynomial or tolerance)");
            }
            continue;
        }
        out.max_correction = std::max(out.max_correction, got);
        z = cand;
        t_cur = tm;
        out.polyline.push_back(z);
        out.params.push_back(t_cur);
        h = std::min(h * 1.3, 0.02 * scale + 0.1 * std::abs(z - A.position));
        // a march making no parameter progress is drifting inside a flat
        // basin; the curve there is below double resolution
        if (step % 1000 == 999) {
            if (eps * (checkpoint_t - t_cur) < 1e-9) {
                if (std::abs(t_cur) > 1 - 1e-3) {
                    out.stalled = true;
                    return out;
                }
                throw numerical_error("trace made no parameter progress");
            }
            checkpoint_t = t_cur;
        }
    }
    throw numerical_error("trace exceeded max steps");
}

}  // namespace detail

// Distinct roots of (p-1)(p+1) with multiplicities via simultaneous root
// finding plus clustering; degree = root multiplicity.
inline std::vector<TracedVertex> vertices(const ShabatPolynomial& p) {
    if (p.degree > 64)
        throw resource_error("global root finding limited to degree <= 64; use trace_tree");
    std::vector<TracedVertex> out;
    for (int value : {+1, -1}) {
        Poly q = p.coefficients;
        q[0] -= double(value);
        auto clusters = cluster_roots(aberth_roots(q), 1e-6);
        int total = 0;
        for (const auto& c : clusters) {
            out.push_back({c.position, value, c.multiplicity});
            total += c.multiplicity;
        }
        if (total != p.degree) throw numerical_error("root multiplicities do not sum to degree");
    }
    // cross-check the solver-provided critical points when available
    for (const auto& cp : p.critical_points) {
        bool found = false;
        for (const auto& v : out)
            if (v.value == cp.target && std::abs(v.position - cp.position) < 1e-5 * (1 + std::abs(cp.position)) &&
                v.degree == cp.multiplicity + 1)
                found = true;
        if (!found) throw numerical_error("critical point does not match a root cluster");
    }
    std::sort(out.begin(), out.end(), [](const TracedVertex& a, const TracedVertex& b) {
        if (a.position.real() != b.position.real()) return a.position.real() < b.position.real();
        return a.position.imag() < b.position.imag();
    });
    return out;
}

// The d unit directions along which the tree leaves a vertex.
inline std::vector<double> local_directions(const ShabatPolynomial& p, Complex position, int value,
                                            int degree) {
    detail::PolyEvaluator eval(p);
    if (degree > 1) {
        for (const auto& cp : p.critical_points)
            if (std::abs(cp.position - position) < 1e-8 * (1 + std::abs(position))) {
                auto infos = detail::internal_vertices(p, eval);
                for (const auto& iv : infos)
                    if (std::abs(iv.position - position) < 1e-8 * (1 + std::abs(position)))
                        return iv.directions;
            }
        throw input_error("no critical point at the given position");
    }
    Complex c1 = eval.derivative(position);
    return detail::direction_angles(c1, value, 1);
}

// Continuation of a single edge from (vertex, direction); returns the traced
// polyline with its parameter samples.
struct EdgeTrace {
    std::vector<Complex> polyline;
    std::vector<double> params;
};

inline EdgeTrace trace_edge(const ShabatPolynomial& p, Complex vertex_position, int vertex_value,
                            int vertex_degree, double direction) {
    detail::PolyEvaluator eval(p);
    auto infos = detail::internal_vertices(p, eval);
    if (vertex_degree > 1) {
        int idx = -1, slot = -1;
        for (std::size_t i = 0; i < infos.size(); ++i)
            if (std::abs(infos[i].position - vertex_position) < 1e-8 * (1 + std::abs(vertex_position))) {
                idx = static_cast<int>(i);
                for (int k = 0; k < infos[i].degree; ++k)
                    if (detail::angle_diff(infos[i].directions[k], direction) < 1e-6) slot = k;
            }
        if (idx < 0 || slot < 0) throw input_error("vertex/direction not found");
        auto res = detail::trace_from(eval, infos, idx, slot, {});
        return {res.polyline, res.params};
    }
    // leaf start: trace the reversed parameter from the (unique) incident edge
    // by marching t from the leaf's value toward the opposite value
    detail::InternalVertex fake;
    fake.position = vertex_position;
    fake.value = vertex_value;
    fake.degree = 1;
    fake.lead_coeff = eval.derivative(vertex_position);
    fake.directions = detail::direction_angles(fake.lead_coeff, vertex_value, 1);
    fake.switch_radius = 0.1;
    fake.switch_band = std::abs(fake.lead_coeff) * 0.1;
    auto all = infos;
    all.push_back(fake);
    auto res = detail::trace_from(eval, all, static_cast<int>(all.size()) - 1, 0, {});
    return {res.polyline, res.params};
}

// Traces every (internal vertex, direction) pair, discovers leaves, checks
// edge count and rebuilds the plane-tree combinatorics.
inline TracedTree trace_tree(const ShabatPolynomial& p) {
    TracedTree out;
    int n = p.degree;
    detail::PolyEvaluator eval(p);

    if (p.critical_points.empty()) {
        if (n != 1) throw input_error("polynomial of degree > 1 without critical points");
        // p(z) = lead z + c0: leaves at (±1 - c0)/lead
        Complex a = (Complex(-1, 0) - eval.c0) / eval.lead;
        Complex b = (Complex(1, 0) - eval.c0) / eval.lead;
        out.geom.vertices = {a, b};
        out.values = {-1, 1};
        out.degrees = {1, 1};
        GeomEdge e;
        e.from = 0;
        e.to = 1;
        std::vector<double> params;
        for (int i = 0; i <= 32; ++i) {
            double t = -1 + 2.0 * i / 32;
            e.polyline.push_back(a + (t + 1.0) / 2.0 * (b - a));
            params.push_back(t);
        }
        out.geom.edges.push_back(e);
        out.edge_params.push_back(params);
        out.combinatorics = derive_rotation_system(out.geom);
        return out;
    }

    auto internals = detail::internal_vertices(p, eval);
    detail::TraceSettings settings;
    if (!eval.use_coeffs) settings.corr_tol = 1e-9;

    struct Key {
        int vertex, slot;
        bool operator<(const Key& o) const {
            return vertex != o.vertex ? vertex < o.vertex : slot < o.slot;
        }
    };
    std::map<Key, detail::TraceOutcome> traces;
    for (int i = 0; i < static_cast<int>(internals.size()); ++i)
        for (int k = 0; k < internals[i].degree; ++k) {
            auto res = detail::trace_from(eval, internals, i, k, settings);
            out.max_correction = std::max(out.max_correction, res.max_correction);
            traces[{i, k}] = std::move(res);
        }
    int stalled_count = 0;
    for (auto& [key, res] : traces) stalled_count += res.stalled;

    // vertex table: internals first, then discovered leaves
    for (const auto& iv : internals) {
        out.geom.vertices.push_back(iv.position);
        out.values.push_back(iv.value);
        out.degrees.push_back(iv.degree);
    }
    double scale = 1.0;
    for (const auto& iv : internals) scale = std::max(scale, std::abs(iv.position));
    double snap = 1e-6 * scale;

    std::vector<Complex> leaves;
    auto leaf_id = [&](Complex z) {
        for (std::size_t i = 0; i < leaves.size(); ++i)
            if (std::abs(leaves[i] - z) < snap)
                throw numerical_error("two traces ended at the same leaf");
        leaves.push_back(z);
        out.geom.vertices.push_back(z);
        out.values.push_back(-out.values[0] * 0);  // placeholder, fixed below
        out.degrees.push_back(1);
        return static_cast<int>(out.geom.vertices.size()) - 1;
    };

    std::map<Key, bool> consumed;
    for (auto& [key, res] : traces) {
        if (consumed[key] || res.stalled) continue;
        consumed[key] = true;
        GeomEdge e;
        e.from = key.vertex;
        std::vector<double> params = res.params;
        if (res.end_internal >= 0) {
            Key partner{res.end_internal, res.arrival_slot};
            auto it = traces.find(partner);
            if (it == traces.end() || consumed[partner])
                throw numerical_error("half-edge pairing failed while tracing");
            // the partner must arrive back here, unless it stalled inside a
            // flat basin and this trace covers the edge alone
            if (!it->second.stalled &&
                (it->second.end_internal != key.vertex || it->second.arrival_slot != key.slot))
                throw numerical_error("inconsistent edge pairing between traces");
            consumed[partner] = true;
            e.to = res.end_internal;
        } else {
            int id = leaf_id(res.leaf);
            out.values[id] = -internals[key.vertex].value;
            e.to = id;
        }
        e.polyline = std::move(res.polyline);
        e.polyline.back() = out.geom.vertices[e.to];
        out.geom.edges.push_back(std::move(e));
        out.edge_params.push_back(std::move(params));
    }
    for (auto& [key, res] : traces)
        if (res.stalled && !consumed[key])
            throw numerical_error("edge unresolved from both ends (flat basin)");

    if (static_cast<int>(out.geom.edges.size()) != n)
        throw numerical_error("traced edge count does not match the degree");
    int degree_sum = 0;
    for (int d : out.degrees) degree_sum += d;
    if (degree_sum != 2 * n) throw numerical_error("vertex degrees do not sum to 2n");

    out.combinatorics = derive_rotation_system(out.geom);
    if (auto bad = validate(out.combinatorics))
        throw numerical_error("traced combinatorics invalid: " + *bad);
    return out;
}

}  // namespace truetree
