#pragma once

// Full solve: geometric hint -> damped Newton on the critical-point system,
// verified through the tracer (Newton can converge to the Shabat polynomial
// of a different plane tree with the same degree sequence). Large trees are
// solved by continuation: leaves are peeled off (keeping the diameter as
// large as possible) until a small core remains, the core is solved directly,
// and the leaves are grown back one at a time with the previous solution as
// the seed.

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <optional>
#include <queue>
#include <vector>

#include "truetree/geom_tree.hpp"
#include "truetree/harmonic.hpp"
#include "truetree/plane_tree.hpp"
#include "truetree/shabat.hpp"
#include "truetree/tracer.hpp"

namespace truetree {

struct SolveReport {
    int newton_iterations = 0;
    double residual = 0;
    int retries = 0;
    int continuation_steps = 0;
};

namespace detail {

// ----- masked-tree helpers ------------------------------------------------

struct MaskedTree {
    const PlaneTree* base;
    std::vector<char> removed;

    int degree(int v) const {
        int d = 0;
        for (int w : base->rotations[v])
            if (!removed[w]) ++d;
        return d;
    }
};

inline std::vector<int> masked_bfs(const MaskedTree& m, int src) {
    std::vector<int> dist(m.base->vertex_count, -1);
    std::queue<int> q;
    dist[src] = 0;
    q.push(src);
    while (!q.empty()) {
        int v = q.front();
        q.pop();
        for (int w : m.base->rotations[v])
            if (!m.removed[w] && dist[w] < 0) {
                dist[w] = dist[v] + 1;
                q.push(w);
            }
    }
    return dist;
}

inline int masked_diameter(const MaskedTree& m) {
    int start = -1;
    for (int v = 0; v < m.base->vertex_count; ++v)
        if (!m.removed[v]) {
            start = v;
            break;
        }
    auto d1 = masked_bfs(m, start);
    int far = start;
    for (int v = 0; v < m.base->vertex_count; ++v)
        if (!m.removed[v] && d1[v] > d1[far]) far = v;
    auto d2 = masked_bfs(m, far);
    int best = 0;
    for (int v = 0; v < m.base->vertex_count; ++v)
        if (!m.removed[v]) best = std::max(best, d2[v]);
    return best;
}

// leaf whose removal keeps the diameter maximal; ties by smallest edge id,
// or randomized among the tied candidates when a shuffler is supplied (used
// by retry chains to explore different growth orders)
inline int pick_leaf(const MaskedTree& m, const PlaneTree& tree, WalkerRng* shuffle = nullptr) {
    struct Cand {
        int v, eid, diam;
    };
    std::vector<Cand> cands;
    int best_diam = -1;
    for (int v = 0; v < tree.vertex_count; ++v) {
        if (m.removed[v] || m.degree(v) != 1) continue;
        int nb = -1;
        for (int w : tree.rotations[v])
            if (!m.removed[w]) nb = w;
        MaskedTree probe = m;
        probe.removed[v] = 1;
        cands.push_back({v, tree.edge_id(v, nb), masked_diameter(probe)});
        best_diam = std::max(best_diam, cands.back().diam);
    }
    if (cands.empty()) return -1;
    std::vector<Cand> top;
    for (const auto& c : cands)
        if (c.diam == best_diam) top.push_back(c);
    if (shuffle) return top[shuffle->next() % top.size()].v;
    int pick = top[0].v, pick_edge = top[0].eid;
    for (const auto& c : top)
        if (c.eid < pick_edge) {
            pick = c.v;
            pick_edge = c.eid;
        }
    return pick;
}

// induced plane tree on the kept vertices; old ids -> new ids in `map`
inline PlaneTree induced_tree(const MaskedTree& m, std::vector<int>& map) {
    const PlaneTree& base = *m.base;
    map.assign(base.vertex_count, -1);
    PlaneTree t;
    int next = 0;
    for (int v = 0; v < base.vertex_count; ++v)
        if (!m.removed[v]) map[v] = next++;
    t.vertex_count = next;
    t.rotations.assign(next, {});
    for (int v = 0; v < base.vertex_count; ++v) {
        if (m.removed[v]) continue;
        for (int w : base.rotations[v])
            if (!m.removed[w]) t.rotations[map[v]].push_back(map[w]);
    }
    return t;
}

// ----- seeding helpers ------------------------------------------------------

// least-squares complex-linear fit h -> alpha h + beta
inline std::pair<Complex, Complex> fit_similarity(const std::vector<Complex>& from,
                                                  const std::vector<Complex>& to) {
    int n = static_cast<int>(from.size());
    if (n == 0) return {Complex(1, 0), Complex(0, 0)};
    Complex mf = 0, mt = 0;
    for (int i = 0; i < n; ++i) {
        mf += from[i];
        mt += to[i];
    }
    mf /= double(n);
    mt /= double(n);
    Complex num = 0;
    double den = 0;
    for (int i = 0; i < n; ++i) {
        num += std::conj(from[i] - mf) * (to[i] - mt);
        den += std::norm(from[i] - mf);
    }
    Complex alpha = den > 0 ? num / den : Complex(1, 0);
    if (alpha == 0.0) alpha = 1.0;
    return {alpha, mt - alpha * mf};
}

inline void reseed_constant(const ShabatSystem& system, Eigen::VectorXcd& state) {
    int k = system.unknowns() - 1;
    if (k == 0) {
        state(0) = 0;
        return;
    }
    Eigen::VectorXcd r = system.residual(state);
    Complex mean = 0;
    for (int i = 0; i < k; ++i) mean += r(i);
    state(k) -= mean / double(k);
}

inline Eigen::VectorXcd initial_state(const ShabatSystem& system,
                                      const std::vector<Complex>& vertex_positions) {
    int k = system.unknowns() - 1;
    Eigen::VectorXcd state(k + 1);
    Complex mu = 0;
    double msum = 0;
    for (int i = 0; i < k; ++i) {
        mu += double(system.multiplicities()[i]) * vertex_positions[system.internal_vertices()[i]];
        msum += system.multiplicities()[i];
    }
    if (msum > 0) mu /= msum;
    double scale = 0;
    for (int i = 0; i < k; ++i)
        scale = std::max(scale, std::abs(vertex_positions[system.internal_vertices()[i]] - mu));
    if (scale <= 0) scale = 1;
    for (int i = 0; i < k; ++i)
        state(i) = (vertex_positions[system.internal_vertices()[i]] - mu) / scale;
    state(k) = 0;
    reseed_constant(system, state);
    return state;
}

inline ShabatPolynomial degree_one_polynomial() {
    ShabatPolynomial p;
    p.degree = 1;
    p.coefficients = {Complex(0, 0), Complex(1, 0)};
    p.residual = 0;
    return p;
}

inline bool verify_combinatorics(const PlaneTree& tree, const ShabatPolynomial& poly) {
    try {
        TracedTree traced = trace_tree(poly);
        bool same = is_equivalent(tree, traced.combinatorics);
#ifdef TT_SOLVE_TRACE
        if (!same) std::fprintf(stderr, "[verify] combinatorics mismatch at degree %d\n", poly.degree);
#endif
        return same;
    } catch (const numerical_error& e) {
#ifdef TT_SOLVE_TRACE
        std::fprintf(stderr, "[verify] trace failed at degree %d: %s\n", poly.degree, e.what());
#endif
        return false;
    }
}

// one continuation chain: peel to the core, solve, grow back; returns the
// unverified polynomial of the full tree or nothing
inline std::optional<ShabatPolynomial> continuation_chain(const PlaneTree& tree,
                                                          const std::vector<int>& colors,
                                                          const std::vector<Complex>& hint,
                                                          const SolveOptions& opts,
                                                          std::uint64_t chain_seed,
                                                          bool canonical_order,
                                                          SolveReport* report) {
    int n = tree.edge_count();
    const int core_edges = 10;

    MaskedTree mask{&tree, std::vector<char>(tree.vertex_count, 0)};
    std::vector<int> peel;
    WalkerRng order_rng(chain_seed, 3);
    WalkerRng* shuffle = canonical_order ? nullptr : &order_rng;
    for (int remaining = n; remaining > core_edges; --remaining) {
        int leaf = pick_leaf(mask, tree, shuffle);
        if (leaf < 0) break;
        mask.removed[leaf] = 1;
        peel.push_back(leaf);
    }

    // solve the core directly with retries
    std::vector<int> map;
    PlaneTree core = induced_tree(mask, map);
    ShabatSystem core_sys(core, BipartiteColoring{[&] {
                              std::vector<int> c(core.vertex_count);
                              for (int v = 0; v < tree.vertex_count; ++v)
                                  if (map[v] >= 0) c[map[v]] = colors[v];
                              return c;
                          }()},
                          opts.coeff_threshold);
    std::vector<Complex> core_hint(core.vertex_count);
    for (int v = 0; v < tree.vertex_count; ++v)
        if (map[v] >= 0) core_hint[map[v]] = hint[v];

    Eigen::VectorXcd state;
    {
        WalkerRng rng(chain_seed, 31);
        bool ok = false;
        if (core.edge_count() == 1) {
            state.resize(1);
            state(0) = 0;
            ok = true;
        } else {
            Eigen::VectorXcd base = initial_state(core_sys, core_hint);
            for (int attempt = 0; attempt <= opts.max_retries && !ok; ++attempt) {
                Eigen::VectorXcd seed = base;
                if (attempt > 0) {
                    // a global rotation is the most effective escape move:
                    // the solution set repeats every 2 pi / n in orientation
                    Complex rot = std::polar(1.0, 2 * std::numbers::pi * rng.uniform());
                    for (int i = 0; i + 1 < seed.size(); ++i)
                        seed(i) = rot * seed(i) + opts.perturb_scale *
                                                      Complex(rng.uniform() - 0.5,
                                                              rng.uniform() - 0.5);
                    reseed_constant(core_sys, seed);
                }
                NewtonOutcome res = newton_solve(core_sys, seed, opts);
                if (report && attempt > 0) ++report->retries;
                if (res.ok) {
                    state = res.state;
                    if (report) report->newton_iterations += res.iterations;
                    ok = true;
                }
            }
        }
        if (!ok) return std::nullopt;
    }

    // grow the peeled leaves back, most recently removed first
    std::vector<Complex> positions(tree.vertex_count, Complex(0, 0));
    std::vector<char> known(tree.vertex_count, 0);
    auto record_positions = [&](const ShabatSystem& sys, const Eigen::VectorXcd& st,
                                const std::vector<int>& to_old) {
        for (std::size_t i = 0; i < sys.internal_vertices().size(); ++i) {
            positions[to_old[sys.internal_vertices()[i]]] = st(i);
            known[to_old[sys.internal_vertices()[i]]] = 1;
        }
    };
    {
        std::vector<int> to_old(core.vertex_count);
        for (int v = 0; v < tree.vertex_count; ++v)
            if (map[v] >= 0) to_old[map[v]] = v;
        record_positions(core_sys, state, to_old);
    }

    WalkerRng rng(chain_seed, 77);
    ShabatSystem last_sys = core_sys;  // only for its shape; rebuilt each step
    Eigen::VectorXcd last_state = state;

    // pending leaves regrow in reverse peel order, but a leaf whose Newton
    // step fails is deferred and another eligible leaf is tried first (the
    // intermediate trees differ in conditioning, which usually unlocks)
    std::vector<int> pending(peel.rbegin(), peel.rend());
    while (!pending.empty()) {
        bool grew = false;
        for (std::size_t pi = 0; pi < pending.size() && !grew; ++pi) {
        int leaf = pending[pi];
        {
            // eligible only if its attachment vertex is present
            bool attach_ok = false;
            for (int w : tree.rotations[leaf])
                if (!mask.removed[w]) attach_ok = true;
            if (!attach_ok) continue;
        }
        mask.removed[leaf] = 0;
        std::vector<int> cmap;
        PlaneTree cur = induced_tree(mask, cmap);
        std::vector<int> to_old(cur.vertex_count);
        for (int v = 0; v < tree.vertex_count; ++v)
            if (cmap[v] >= 0) to_old[cmap[v]] = v;
        std::vector<int> cur_colors(cur.vertex_count);
        for (int v = 0; v < tree.vertex_count; ++v)
            if (cmap[v] >= 0) cur_colors[cmap[v]] = colors[v];
        ShabatSystem sys(cur, BipartiteColoring{cur_colors}, opts.coeff_threshold);

        int attach = -1;
        for (int w : tree.rotations[leaf])
            if (!mask.removed[w]) attach = w;

        int k = sys.unknowns() - 1;
        Eigen::VectorXcd seed(k + 1);
        // map hint directions into the solution frame
        std::vector<Complex> match_h, match_s;
        for (int i = 0; i < k; ++i) {
            int old_v = to_old[sys.internal_vertices()[i]];
            if (known[old_v]) {
                match_h.push_back(hint[old_v]);
                match_s.push_back(positions[old_v]);
            }
        }
        auto [alpha, beta] = fit_similarity(match_h, match_s);

        // per-point separations: true forms of shielded trees cluster their
        // critical points, so offsets must use the local scale
        auto local_sep = [&](Complex z, Complex exclude) {
            double best = 1.0;
            for (int v = 0; v < tree.vertex_count; ++v)
                if (known[v] && positions[v] != exclude) {
                    double d = std::abs(positions[v] - z);
                    if (d > 0) best = std::min(best, d);
                }
            return best;
        };

        int idx_new = -1;
        Complex new_base = 0, new_dir = 1;
        double new_sep = 0.5;
        for (int i = 0; i < k; ++i) {
            int old_v = to_old[sys.internal_vertices()[i]];
            // internal in the previous (smaller) tree iff masked degree > 1
            MaskedTree prev = mask;
            prev.removed[leaf] = 1;
            bool was_internal = prev.degree(old_v) > 1;
            if (was_internal) {
                seed(i) = positions[old_v];
            } else {
                // newly internal attachment vertex: offset from its neighbor
                // along the hinted edge direction, at the neighbor's scale
                int u = -1;
                for (int w : tree.rotations[old_v])
                    if (!mask.removed[w] && w != leaf) u = w;
                Complex base = (u >= 0 && known[u]) ? positions[u] : Complex(0, 0);
                Complex hdir = u >= 0 ? hint[old_v] - hint[u] : Complex(1, 0);
                Complex sdir = alpha * hdir;
                if (!(std::abs(sdir) > 0)) sdir = Complex(1, 0);
                double sep = (u >= 0 && known[u]) ? local_sep(positions[u], positions[u]) : 0.5;
                idx_new = i;
                new_base = base;
                new_dir = sdir / std::abs(sdir);
                new_sep = sep;
                seed(i) = base + 0.45 * sep * new_dir;
            }
        }
        seed(k) = last_state(last_state.size() - 1);
        reseed_constant(sys, seed);

        // pre-polish the new unknown with everything else frozen: a 1-unknown
        // Newton on p(a_new) = eps_new is far more basin-tolerant
        auto polish_new = [&](Eigen::VectorXcd& s) {
            if (idx_new < 0) return;
            for (int it = 0; it < 25; ++it) {
                Eigen::VectorXcd r = sys.residual(s);
                if (!std::isfinite(std::abs(r(idx_new)))) return;
                if (std::abs(r(idx_new)) < 1e-8) return;
                Eigen::MatrixXcd J = sys.jacobian(s);
                Complex d = J(idx_new, idx_new);
                if (!(std::abs(d) > 0)) return;
                Complex step = r(idx_new) / d;
                if (!std::isfinite(std::abs(step))) return;
                if (std::abs(step) > 0.5 * new_sep) step *= 0.5 * new_sep / std::abs(step);
                s(idx_new) -= step;
            }
        };

        bool ok = false;
        const int grow_attempts = 10;
        const double radius_menu[] = {0.45, 0.25, 0.8, 1.8, 4.0};
        for (int attempt = 0; attempt < grow_attempts && !ok; ++attempt) {
            Eigen::VectorXcd s = seed;
            if (attempt > 0) {
                // scale-aware shake: each point moves a fraction of its own
                // distance to the nearest other point
                for (int i = 0; i < k; ++i) {
                    double sep = 1.0;
                    for (int j = 0; j < k; ++j)
                        if (j != i) sep = std::min(sep, std::abs(seed(i) - seed(j)));
                    s(i) = seed(i) + (0.04 + 0.04 * attempt) * sep *
                                         Complex(rng.uniform() - 0.5, rng.uniform() - 0.5);
                }
                // sweep the new vertex around its neighbor in angle and
                // radius: wrong attachment sectors and underestimated scales
                // are the dominant failure modes
                if (idx_new >= 0) {
                    double angle = attempt * 2.39996;  // golden angle
                    double radius = radius_menu[attempt % 5];
                    s(idx_new) = new_base + radius * new_sep * new_dir * std::polar(1.0, angle);
                }
                reseed_constant(sys, s);
            }
            polish_new(s);
            reseed_constant(sys, s);
            NewtonOutcome res = newton_solve(sys, s, opts);
            if (report && attempt > 0) ++report->retries;
#ifdef TT_SOLVE_TRACE
            std::fprintf(stderr, "[grow] leaf %d edges %d attempt %d ok %d res %.3g iters %d %s\n",
                         leaf, cur.edge_count(), attempt, int(res.ok), res.residual,
                         res.iterations, res.message.c_str());
            if (!res.ok && attempt == 0) {
                Eigen::VectorXcd rr = sys.residual(res.state);
                std::fprintf(stderr, "    idx_new=%d attach=%d |r|:", idx_new, attach);
                for (int q = 0; q < rr.size(); ++q) std::fprintf(stderr, " %.2g", std::abs(rr(q)));
                std::fprintf(stderr, "\n");
            }
#endif
            if (res.ok) {
                last_state = res.state;
                record_positions(sys, res.state, to_old);
                if (report) {
                    report->newton_iterations += res.iterations;
                    ++report->continuation_steps;
                }
                ok = true;
            }
        }
        if (!ok) {
            mask.removed[leaf] = 1;  // defer; try another pending leaf
            continue;
        }
        last_sys = sys;
        pending.erase(pending.begin() + pi);
        grew = true;
        }
        if (!grew) return std::nullopt;  // no pending leaf can be grown
    }
    return last_sys.make_polynomial(last_state);
}

inline ShabatPolynomial solve_colored(const PlaneTree& tree, const std::vector<int>& colors,
                                      const std::vector<Complex>& hint, const SolveOptions& opts,
                                      SolveReport* report) {
    int n = tree.edge_count();
    if (n == 1) return degree_one_polynomial();
    ShabatSystem system(tree, BipartiteColoring{colors}, opts.coeff_threshold);
    int k = system.unknowns() - 1;

    // direct attempts from the hint; cheap when the hint is close (small
    // trees, or nearly balanced geometry like a decorated tree)
    int direct_attempts = n <= 16 ? opts.max_retries + 1 : 2;
    double best_residual = std::numeric_limits<double>::infinity();
    {
        Eigen::VectorXcd base = initial_state(system, hint);
        WalkerRng rng(opts.retry_seed, 101);
        for (int attempt = 0; attempt < direct_attempts; ++attempt) {
            Eigen::VectorXcd seed = base;
            if (attempt > 0) {
                Complex rot = std::polar(1.0, 2 * std::numbers::pi * rng.uniform());
                for (int i = 0; i < k; ++i)
                    seed(i) = rot * seed(i) +
                              opts.perturb_scale * Complex(rng.uniform() - 0.5, rng.uniform() - 0.5);
                reseed_constant(system, seed);
            }
            NewtonOutcome res = newton_solve(system, seed, opts);
            if (report && attempt > 0) ++report->retries;
            best_residual = std::min(best_residual, res.residual);
            if (!res.ok) continue;
            ShabatPolynomial poly = system.make_polynomial(res.state);
            if (verify_combinatorics(tree, poly)) {
                if (report) {
                    report->newton_iterations += res.iterations;
                    report->residual = poly.residual;
                }
                return poly;
            }
        }
    }

    // continuation chains with fresh seeds
    for (std::uint64_t chain = 0; chain < 3; ++chain) {
        auto poly = continuation_chain(tree, colors, hint, opts, opts.retry_seed + 1000 * chain,
                                       chain == 0, report);
        if (!poly) continue;
        best_residual = std::min(best_residual, poly->residual);
        if (verify_combinatorics(tree, *poly)) {
            if (report) report->residual = poly->residual;
            return *poly;
        }
    }
    throw numerical_error("solve exhausted retries and continuation (best residual " +
                          std::to_string(best_residual) + ")");
}

}  // namespace detail

// Solve the Shabat polynomial of a plane tree. The hint supplies starting
// positions for the internal vertices; without one a deterministic planted
// layout is used. The accepted solution is tracer-verified.
inline ShabatPolynomial solve(const PlaneTree& tree, const GeomTree* hint = nullptr,
                              SolveOptions opts = {}, SolveReport* report = nullptr) {
    require_valid(tree);
    BipartiteColoring coloring = bipartite_coloring(tree, opts.coloring_root);
    std::vector<Complex> positions;
    if (hint) {
        if (static_cast<int>(hint->vertices.size()) != tree.vertex_count)
            throw input_error("hint vertex count does not match the tree");
        positions = hint->vertices;
    } else {
        positions = plant_layout(tree).vertices;
    }
    return detail::solve_colored(tree, coloring.color, positions, opts, report);
}

}  // namespace truetree
