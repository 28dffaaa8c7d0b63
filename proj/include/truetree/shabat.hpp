#pragma once

// Shabat polynomials via damped Newton iteration on the critical-point
// system. Unknowns are the distinct critical points plus the integration
// constant; the multiplicity structure of p' is enforced by construction.
//
// Small systems evaluate p through its expanded coefficients; large ones use
// the product form of p' and exact Gauss-Legendre quadrature of its integral
// with log-magnitude accumulation, which stays stable far beyond the degrees
// where expanded coefficients lose all precision.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "truetree/errors.hpp"
#include "truetree/geom_tree.hpp"
#include "truetree/plane_tree.hpp"
#include "truetree/poly.hpp"

namespace truetree {

struct CriticalPoint {
    Complex position{0, 0};
    int multiplicity = 1;  // deg(v) - 1
    int target = 1;        // epsilon_v
};

struct ShabatPolynomial {
    int degree = 1;
    Poly coefficients;  // ascending powers, length degree + 1
    std::vector<CriticalPoint> critical_points;
    double residual = 0;
    Similarity normalization;  // normal-form coordinates -> input coordinates

    Complex leading() const { return coefficients.back(); }
    Complex constant() const { return coefficients.front(); }
};

struct SolveOptions {
    double tol = 1e-12;
    int max_newton_iters = 400;
    double min_step = 0x1p-20;
    double perturb_scale = 0.15;
    int max_retries = 8;
    std::uint64_t retry_seed = 1;
    int coloring_root = 0;
    // expanded coefficients grow exponentially with the degree, so their
    // evaluation noise crosses 1e-12 near 12 edges; the quadrature path keeps
    // a flat noise floor well past a hundred edges
    int coeff_threshold = 10;
    double large_degree_tol = 3e-10;

    double residual_tol(int degree) const {
        return degree <= coeff_threshold ? tol : std::max(tol, large_degree_tol);
    }
};

// p(z) = c0 + n * Integral_0^z prod (w - a_v)^{m_v} dw ; monic by construction.
inline Poly shabat_expand(const std::vector<Complex>& points, const std::vector<int>& mults,
                          Complex c0) {
    int n = 1;
    for (int m : mults) n += m;
    Poly prod = poly_from_roots(points, mults);
    Poly integ = poly_integral(prod);
    Poly p(integ.size(), 0.0);
    for (std::size_t i = 1; i < integ.size(); ++i) p[i] = double(n) * integ[i];
    p[0] = c0;
    p.back() = 1.0;  // n * (1/n) exactly
    return p;
}

namespace detail {

// Integral_0^z prod (w - a_v)^{m_v} dw, exact Gauss-Legendre (the integrand is
// a polynomial), accumulated through log magnitudes.
inline Complex product_integral(const std::vector<Complex>& points, const std::vector<int>& mults,
                                int degree, Complex z) {
    if (z == 0.0) return 0.0;
    int order = degree / 2 + 2;
    const GaussLegendre& rule = gauss_legendre(order);
    std::vector<double> logs(order);
    std::vector<double> phases(order);
    double lmax = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < order; ++s) {
        Complex zeta = 0.5 * (rule.nodes[s] + 1.0) * z;
        double lm = 0, ph = 0;
        for (std::size_t u = 0; u < points.size(); ++u) {
            Complex d = zeta - points[u];
            double ad = std::abs(d);
            if (ad == 0) {
                lm = -std::numeric_limits<double>::infinity();
                break;
            }
            lm += mults[u] * std::log(ad);
            ph += mults[u] * std::arg(d);
        }
        logs[s] = lm;
        phases[s] = ph;
        lmax = std::max(lmax, lm);
    }
    if (!std::isfinite(lmax)) return 0.0;
    Complex acc = 0;
    for (int s = 0; s < order; ++s)
        acc += rule.weights[s] * std::exp(logs[s] - lmax) * std::polar(1.0, phases[s]);
    return 0.5 * z * std::exp(lmax) * acc;
}

inline Complex product_value(const std::vector<Complex>& points, const std::vector<int>& mults,
                             Complex z) {
    double lm = 0, ph = 0;
    for (std::size_t u = 0; u < points.size(); ++u) {
        Complex d = z - points[u];
        double ad = std::abs(d);
        if (ad == 0) return 0.0;
        lm += mults[u] * std::log(ad);
        ph += mults[u] * std::arg(d);
    }
    return std::exp(lm) * std::polar(1.0, ph);
}

// Segment integral of prod (w - a_u)^{m_u} (and optionally of the same
// divided by (w - a_v) for every v), Gauss-Legendre with log accumulation.
// Exact for polynomial integrands of the given degree.
struct SegmentIntegral {
    Complex base = 0;                 // integral of the product
    std::vector<Complex> divided;     // integral of product / (w - a_v), per v
};

inline SegmentIntegral product_segment_integral(const std::vector<Complex>& points,
                                                const std::vector<int>& mults, int degree,
                                                Complex from, Complex to, bool with_divided) {
    SegmentIntegral out;
    if (with_divided) out.divided.assign(points.size(), Complex(0, 0));
    if (from == to) return out;
    int order = degree / 2 + 2;
    const GaussLegendre& rule = gauss_legendre(order);
    std::vector<double> logs(order), phases(order);
    std::vector<Complex> nodes(order);
    double lmax = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < order; ++s) {
        Complex zeta = from + 0.5 * (rule.nodes[s] + 1.0) * (to - from);
        nodes[s] = zeta;
        double lm = 0, ph = 0;
        for (std::size_t u = 0; u < points.size(); ++u) {
            Complex d = zeta - points[u];
            double ad = std::abs(d);
            if (ad == 0) {
                lm = -std::numeric_limits<double>::infinity();
                break;
            }
            lm += mults[u] * std::log(ad);
            ph += mults[u] * std::arg(d);
        }
        logs[s] = lm;
        phases[s] = ph;
        lmax = std::max(lmax, lm);
    }
    if (!std::isfinite(lmax)) lmax = 0;
    Complex half = 0.5 * (to - from);
    Complex acc = 0;
    for (int s = 0; s < order; ++s)
        if (std::isfinite(logs[s]))
            acc += rule.weights[s] * std::exp(logs[s] - lmax) * std::polar(1.0, phases[s]);
    out.base = half * std::exp(lmax) * acc;
    if (with_divided) {
        for (std::size_t v = 0; v < points.size(); ++v) {
            Complex accv = 0;
            for (int s = 0; s < order; ++s) {
                if (!std::isfinite(logs[s])) continue;
                Complex d = nodes[s] - points[v];
                double ad = std::abs(d);
                if (ad == 0) continue;  // the divided integrand is a polynomial; skip the removable point
                accv += rule.weights[s] * std::exp(logs[s] - lmax - std::log(ad)) *
                        std::polar(1.0, phases[s] - std::arg(d));
            }
            out.divided[v] = half * std::exp(lmax) * accv;
        }
    }
    return out;
}

// Evaluation chain: integrals accumulate along short hops between neighboring
// critical points (a Euclidean minimum spanning tree rooted at the origin).
// A single straight path from the origin loses ~eps * max|P| / |I| digits to
// cancellation once the points cluster; short hops keep the integrand tame.
struct EvalChain {
    std::vector<int> order;    // point indices in accumulation order
    std::vector<int> parent;   // parent point index, -1 = the origin
};

inline EvalChain build_eval_chain(const std::vector<Complex>& points) {
    int k = static_cast<int>(points.size());
    EvalChain chain;
    chain.parent.assign(k, -1);
    std::vector<char> used(k, 0);
    std::vector<double> dist(k);
    std::vector<int> from(k, -1);
    for (int i = 0; i < k; ++i) dist[i] = std::abs(points[i]);  // to the origin
    for (int step = 0; step < k; ++step) {
        int best = -1;
        for (int i = 0; i < k; ++i)
            if (!used[i] && (best < 0 || dist[i] < dist[best])) best = i;
        used[best] = 1;
        chain.order.push_back(best);
        chain.parent[best] = from[best];
        for (int i = 0; i < k; ++i)
            if (!used[i]) {
                double d = std::abs(points[i] - points[best]);
                if (d < dist[i]) {
                    dist[i] = d;
                    from[i] = best;
                }
            }
    }
    return chain;
}

}  // namespace detail

// The critical-point system of one plane tree: k critical values plus the
// centering constraint, in k+1 complex unknowns (a_1..a_k, c0).
class ShabatSystem {
  public:
    ShabatSystem(const PlaneTree& tree, const BipartiteColoring& coloring, int coeff_threshold = 30)
        : coeff_threshold_(coeff_threshold) {
        require_valid(tree);
        degree_ = tree.edge_count();
        for (int v = 0; v < tree.vertex_count; ++v)
            if (tree.degree(v) > 1) {
                internal_.push_back(v);
                mults_.push_back(tree.degree(v) - 1);
                targets_.push_back(coloring.color[v]);
            }
    }

    int unknowns() const { return static_cast<int>(internal_.size()) + 1; }
    int degree() const { return degree_; }
    const std::vector<int>& internal_vertices() const { return internal_; }
    const std::vector<int>& multiplicities() const { return mults_; }
    const std::vector<int>& targets() const { return targets_; }
    bool uses_coefficients() const { return degree_ <= coeff_threshold_; }

    std::vector<Complex> points_of(const Eigen::VectorXcd& state) const {
        std::vector<Complex> pts(internal_.size());
        for (std::size_t i = 0; i < internal_.size(); ++i) pts[i] = state(i);
        return pts;
    }

    Complex value(const Eigen::VectorXcd& state, Complex z) const {
        auto pts = points_of(state);
        Complex c0 = state(unknowns() - 1);
        if (uses_coefficients()) return poly_eval(shabat_expand(pts, mults_, c0), z);
        // anchor at the nearest critical point, whose value the chain provides
        auto chain = detail::build_eval_chain(pts);
        std::vector<Complex> integral(pts.size());
        for (int idx : chain.order) {
            Complex from = chain.parent[idx] < 0 ? Complex(0, 0) : pts[chain.parent[idx]];
            Complex base = chain.parent[idx] < 0 ? Complex(0, 0) : integral[chain.parent[idx]];
            integral[idx] =
                base + detail::product_segment_integral(pts, mults_, degree_, from, pts[idx], false)
                           .base;
        }
        int anchor = -1;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < pts.size(); ++i)
            if (std::abs(z - pts[i]) < best) {
                best = std::abs(z - pts[i]);
                anchor = static_cast<int>(i);
            }
        Complex from = anchor < 0 ? Complex(0, 0) : pts[anchor];
        Complex base = anchor < 0 ? Complex(0, 0) : integral[anchor];
        Complex tail = detail::product_segment_integral(pts, mults_, degree_, from, z, false).base;
        return c0 + double(degree_) * (base + tail);
    }

    // components p(a_v) - eps_v for each internal v, then the centering sum
    Eigen::VectorXcd residual(const Eigen::VectorXcd& state) const {
        int k = static_cast<int>(internal_.size());
        Eigen::VectorXcd r(k + 1);
        auto pts = points_of(state);
        Complex c0 = state(k);
        if (uses_coefficients()) {
            Poly p = shabat_expand(pts, mults_, c0);
            for (int i = 0; i < k; ++i) r(i) = poly_eval(p, pts[i]) - double(targets_[i]);
        } else if (k > 0) {
            auto chain = detail::build_eval_chain(pts);
            std::vector<Complex> integral(pts.size());
            for (int idx : chain.order) {
                Complex from = chain.parent[idx] < 0 ? Complex(0, 0) : pts[chain.parent[idx]];
                Complex base = chain.parent[idx] < 0 ? Complex(0, 0) : integral[chain.parent[idx]];
                integral[idx] = base + detail::product_segment_integral(pts, mults_, degree_, from,
                                                                        pts[idx], false)
                                           .base;
            }
            for (int i = 0; i < k; ++i)
                r(i) = c0 + double(degree_) * integral[i] - double(targets_[i]);
        }
        if (k == 0) {
            r(0) = c0;  // no critical points: normalization pins c0 = 0
            return r;
        }
        Complex center = 0;
        for (int i = 0; i < k; ++i) center += double(mults_[i]) * pts[i];
        r(k) = center;
        return r;
    }

    // d p(a_w) / d a_v = -m_v n Integral_0^{a_w} prod_{u != v}(z-a_u)^{m_u} (z-a_v)^{m_v-1} dz
    Eigen::MatrixXcd jacobian(const Eigen::VectorXcd& state) const {
        int k = static_cast<int>(internal_.size());
        Eigen::MatrixXcd J(k + 1, k + 1);
        auto pts = points_of(state);
        if (uses_coefficients()) {
            for (int v = 0; v < k; ++v) {
                std::vector<int> m = mults_;
                m[v] -= 1;
                Poly integ = poly_integral(poly_from_roots(pts, m));
                for (int w = 0; w < k; ++w)
                    J(w, v) = -double(mults_[v]) * double(degree_) * poly_eval(integ, pts[w]);
            }
        } else {
            // accumulate the divided integrals along the same short-hop chain
            auto chain = detail::build_eval_chain(pts);
            std::vector<std::vector<Complex>> divided(k, std::vector<Complex>(k, Complex(0, 0)));
            for (int idx : chain.order) {
                Complex from = chain.parent[idx] < 0 ? Complex(0, 0) : pts[chain.parent[idx]];
                auto seg = detail::product_segment_integral(pts, mults_, degree_, from, pts[idx], true);
                if (chain.parent[idx] < 0) {
                    for (int v = 0; v < k; ++v) divided[idx][v] = seg.divided[v];
                } else {
                    for (int v = 0; v < k; ++v)
                        divided[idx][v] = divided[chain.parent[idx]][v] + seg.divided[v];
                }
            }
            for (int w = 0; w < k; ++w)
                for (int v = 0; v < k; ++v)
                    J(w, v) = -double(mults_[v]) * double(degree_) * divided[w][v];
        }
        for (int w = 0; w < k; ++w) J(w, k) = 1.0;      // d/d c0
        for (int v = 0; v < k; ++v) J(k, v) = double(mults_[v]);  // centering row
        J(k, k) = k == 0 ? 1.0 : 0.0;
        return J;
    }

    ShabatPolynomial make_polynomial(const Eigen::VectorXcd& state) const {
        ShabatPolynomial p;
        p.degree = degree_;
        auto pts = points_of(state);
        p.coefficients = shabat_expand(pts, mults_, state(unknowns() - 1));
        for (std::size_t i = 0; i < internal_.size(); ++i)
            p.critical_points.push_back({pts[i], mults_[i], targets_[i]});
        p.residual = residual(state).cwiseAbs().maxCoeff();
        return p;
    }

  private:
    int degree_ = 1;
    int coeff_threshold_ = 30;
    std::vector<int> internal_;
    std::vector<int> mults_;
    std::vector<int> targets_;
};

struct NewtonOutcome {
    bool ok = false;
    Eigen::VectorXcd state;
    double residual = std::numeric_limits<double>::infinity();
    int iterations = 0;
    std::string message;
};

namespace detail {

inline bool points_distinct(const Eigen::VectorXcd& state, int k) {
    double scale = 1.0;
    for (int i = 0; i < k; ++i) scale = std::max(scale, std::abs(state(i)));
    for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j)
            if (std::abs(state(i) - state(j)) < 1e-13 * scale) return false;
    return true;
}

}  // namespace detail

// Damped Newton: full step, backtrack by halving while the residual sup-norm
// does not decrease. Steps producing coincident critical points are rejected.
inline NewtonOutcome newton_solve(const ShabatSystem& system, const Eigen::VectorXcd& initial,
                                  const SolveOptions& opts) {
    int k = system.unknowns() - 1;
    NewtonOutcome out;
    out.state = initial;
    if (!detail::points_distinct(out.state, k)) {
        out.message = "initial critical points coincide";
        return out;
    }
    double tol = opts.residual_tol(system.degree());
    Eigen::VectorXcd r = system.residual(out.state);
    double rn = r.cwiseAbs().maxCoeff();
    if (!std::isfinite(rn)) {
        out.message = "initial residual not finite";
        return out;
    }
    for (int iter = 0; iter < opts.max_newton_iters; ++iter) {
        if (rn <= tol) {
            out.ok = true;
            out.residual = rn;
            out.iterations = iter;
            return out;
        }
        Eigen::MatrixXcd J = system.jacobian(out.state);
        if (!J.allFinite()) {
            out.message = "jacobian not finite";
            out.residual = rn;
            return out;
        }
        auto try_direction = [&](const Eigen::VectorXcd& dir) {
            if (!dir.allFinite()) return false;
            double lambda = 1.0;
            while (lambda >= opts.min_step) {
                Eigen::VectorXcd cand = out.state + lambda * dir;
                if (detail::points_distinct(cand, k)) {
                    Eigen::VectorXcd rc = system.residual(cand);
                    double rcn = rc.cwiseAbs().maxCoeff();
                    if (std::isfinite(rcn) && rcn < rn) {
                        out.state = cand;
                        r = rc;
                        rn = rcn;
                        return true;
                    }
                }
                lambda *= 0.5;
            }
            return false;
        };
        bool accepted = try_direction(J.partialPivLu().solve(-r));
        if (!accepted) {
            // regularized fallback for ill-conditioned stretches
            Eigen::MatrixXcd JhJ = J.adjoint() * J;
            Eigen::VectorXcd g = J.adjoint() * (-r);
            double base = JhJ.diagonal().cwiseAbs().maxCoeff() + 1e-300;
            for (double mu : {1e-10, 1e-7, 1e-4, 1e-2, 1.0}) {
                Eigen::MatrixXcd M = JhJ;
                M.diagonal().array() += mu * base;
                if (try_direction(M.partialPivLu().solve(g))) {
                    accepted = true;
                    break;
                }
            }
        }
        if (!accepted) {
            out.message = "step underflow (no residual decrease)";
            out.residual = rn;
            out.iterations = iter;
            return out;
        }
    }
    out.residual = rn;
    out.iterations = opts.max_newton_iters;
    if (rn <= tol) {
        out.ok = true;
    } else {
        out.message = "max Newton iterations";
    }
    return out;
}

// Normal form: monic and centered. Returns the normalized polynomial plus the
// similarity mapping normal-form coordinates back to the input coordinates.
inline ShabatPolynomial normalize(const ShabatPolynomial& p) {
    int n = p.degree;
    int msum = 0;
    Complex mu = 0;
    for (const auto& c : p.critical_points) {
        mu += double(c.multiplicity) * c.position;
        msum += c.multiplicity;
    }
    if (msum > 0) mu /= double(msum);
    Complex lead = p.coefficients.back();
    Complex lambda = std::pow(lead, -1.0 / double(n));

    ShabatPolynomial q;
    q.degree = n;
    std::vector<Complex> pts;
    std::vector<int> mults;
    for (const auto& c : p.critical_points) {
        Complex a = (c.position - mu) / lambda;
        q.critical_points.push_back({a, c.multiplicity, c.target});
        pts.push_back(a);
        mults.push_back(c.multiplicity);
    }
    Complex c0 = poly_eval(p.coefficients, mu);
    q.coefficients = shabat_expand(pts, mults, c0);
    q.residual = p.residual;
    q.normalization.scale = std::abs(lambda);
    q.normalization.rotation = std::arg(lambda);
    q.normalization.translation = mu;
    return q;
}

// Coefficient sup-distance after normalizing both sides, minimized over the
// residual discrete freedom (precompositions z -> zeta z with zeta^n = 1).
inline double compare_up_to_similarity(const ShabatPolynomial& a, const ShabatPolynomial& b) {
    if (a.degree != b.degree) throw input_error("degree mismatch in polynomial comparison");
    ShabatPolynomial na = normalize(a);
    ShabatPolynomial nb = normalize(b);
    int n = a.degree;
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < n; ++k) {
        Complex zeta = std::polar(1.0, 2 * std::numbers::pi * k / n);
        double sup = 0;
        Complex zj = 1.0;
        for (int j = 0; j <= n; ++j) {
            sup = std::max(sup, std::abs(na.coefficients[j] - nb.coefficients[j] * zj));
            zj *= zeta;
        }
        best = std::min(best, sup);
    }
    return best;
}

}  // namespace truetree
