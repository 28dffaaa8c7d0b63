#pragma once

// Embedded planar trees: polyline edges, validation, Hausdorff distance,
// similarity alignment and the geometry <-> combinatorics bridge.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "truetree/errors.hpp"
#include "truetree/plane_tree.hpp"

namespace truetree {

using Complex = std::complex<double>;

inline double cross(Complex a, Complex b) { return a.real() * b.imag() - a.imag() * b.real(); }
inline double dot(Complex a, Complex b) { return a.real() * b.real() + a.imag() * b.imag(); }

// z -> scale * e^{i rotation} * z + translation
struct Similarity {
    double scale = 1.0;
    double rotation = 0.0;
    Complex translation{0.0, 0.0};

    Complex operator()(Complex z) const {
        return scale * std::polar(1.0, rotation) * z + translation;
    }
    Similarity inverse() const {
        Similarity inv;
        inv.scale = 1.0 / scale;
        inv.rotation = -rotation;
        inv.translation = -std::polar(1.0 / scale, -rotation) * translation;
        return inv;
    }
};

struct GeomEdge {
    int from = -1;
    int to = -1;
    std::vector<Complex> polyline;  // first point = vertices[from], last = vertices[to]
    std::string tag;                // provenance: "grid", "stub", "tooth", "tip-tooth", ...

    double length() const {
        double L = 0;
        for (std::size_t i = 1; i < polyline.size(); ++i) L += std::abs(polyline[i] - polyline[i - 1]);
        return L;
    }
};

struct GeomTree {
    std::vector<Complex> vertices;
    std::vector<GeomEdge> edges;

    int degree(int v) const {
        int d = 0;
        for (const auto& e : edges) d += (e.from == v) + (e.to == v);
        return d;
    }

    void bounding_box(Complex& lo, Complex& hi) const {
        double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
        double x1 = -x0, y1 = -x0;
        for (const auto& e : edges)
            for (Complex p : e.polyline) {
                x0 = std::min(x0, p.real());
                x1 = std::max(x1, p.real());
                y0 = std::min(y0, p.imag());
                y1 = std::max(y1, p.imag());
            }
        for (Complex p : vertices) {
            x0 = std::min(x0, p.real());
            x1 = std::max(x1, p.real());
            y0 = std::min(y0, p.imag());
            y1 = std::max(y1, p.imag());
        }
        lo = {x0, y0};
        hi = {x1, y1};
    }

    double diameter() const {
        if (vertices.empty()) return 0;
        Complex lo, hi;
        bounding_box(lo, hi);
        return std::abs(hi - lo);
    }
};

// ---------------------------------------------------------------------------
// distance primitives and uniform-grid indices

inline double point_segment_dist2(Complex q, Complex a, Complex b, double* t_out = nullptr) {
    Complex w = b - a;
    double L2 = std::norm(w);
    double t = 0;
    if (L2 > 0) t = std::clamp(dot(q - a, w) / L2, 0.0, 1.0);
    if (t_out) *t_out = t;
    return std::norm(q - (a + t * w));
}

struct SegmentRecord {
    Complex a, b;
    int edge = -1;     // owning edge id
    double t0 = 0;     // arclength parameter of `a` within the edge, in [0,1]
    double t1 = 1;     // arclength parameter of `b`
};

struct NearestSegment {
    double dist = 0;
    int segment = -1;  // index into the flattened segment list
    int edge = -1;
    double param = 0;  // arclength parameter along the owning edge
    Complex foot{0, 0};
};

// Flattens polylines into parametrized segments. Degenerate zero-length
// pieces are dropped.
inline std::vector<SegmentRecord> flatten_segments(const GeomTree& t) {
    std::vector<SegmentRecord> segs;
    for (int e = 0; e < static_cast<int>(t.edges.size()); ++e) {
        const auto& pl = t.edges[e].polyline;
        double L = t.edges[e].length();
        if (L <= 0) continue;
        double acc = 0;
        for (std::size_t i = 1; i < pl.size(); ++i) {
            double step = std::abs(pl[i] - pl[i - 1]);
            if (step <= 0) continue;
            segs.push_back({pl[i - 1], pl[i], e, acc / L, (acc + step) / L});
            acc += step;
        }
    }
    return segs;
}

// Uniform grid over segments supporting exact nearest queries: the result
// (including tie-breaks) is identical to an ascending brute-force scan.
class SegmentIndex {
  public:
    SegmentIndex() = default;

    explicit SegmentIndex(std::vector<SegmentRecord> segs) : segs_(std::move(segs)) {
        if (segs_.empty()) throw input_error("segment index: empty geometry");
        double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
        double total = 0;
        for (const auto& s : segs_) {
            x0 = std::min({x0, s.a.real(), s.b.real()});
            x1 = std::max({x1, s.a.real(), s.b.real()});
            y0 = std::min({y0, s.a.imag(), s.b.imag()});
            y1 = std::max({y1, s.a.imag(), s.b.imag()});
            total += std::abs(s.b - s.a);
        }
        lo_ = {x0, y0};
        double w = std::max(x1 - x0, 1e-300), h = std::max(y1 - y0, 1e-300);
        double target = std::max(total / segs_.size(), std::max(w, h) / 512.0);
        cell_ = std::max(target, 1e-12 * std::max(w, h));
        nx_ = std::max(1, std::min(2048, static_cast<int>(w / cell_) + 1));
        ny_ = std::max(1, std::min(2048, static_cast<int>(h / cell_) + 1));
        cell_ = std::max(w / nx_, h / ny_) * (1.0 + 1e-12);
        cells_.assign(std::size_t(nx_) * ny_, {});
        for (int i = 0; i < static_cast<int>(segs_.size()); ++i) {
            auto [ia0, ja0] = cell_of(segs_[i].a);
            auto [ia1, ja1] = cell_of(segs_[i].b);
            int i0 = std::min(ia0, ia1), i1 = std::max(ia0, ia1);
            int j0 = std::min(ja0, ja1), j1 = std::max(ja0, ja1);
            for (int cj = j0; cj <= j1; ++cj)
                for (int ci = i0; ci <= i1; ++ci)
                    if (seg_touches_cell(segs_[i], ci, cj)) cells_[idx(ci, cj)].push_back(i);
        }
    }

    const std::vector<SegmentRecord>& segments() const { return segs_; }

    NearestSegment query(Complex q) const {
        double best_d2 = std::numeric_limits<double>::infinity();
        int best = -1;
        auto consider = [&](int s) {
            double d2 = point_segment_dist2(q, segs_[s].a, segs_[s].b);
            if (d2 < best_d2 || (d2 == best_d2 && s < best)) {
                best_d2 = d2;
                best = s;
            }
        };
        auto [ci, cj] = cell_of(q);
        int max_r = std::max({ci, nx_ - 1 - ci, cj, ny_ - 1 - cj});
        for (int r = 0; r <= max_r; ++r) {
            if (best >= 0) {
                double lb = ring_lower_bound(q, ci, cj, r);
                if (lb * lb > best_d2) break;
            }
            visit_ring(ci, cj, r, consider);
        }
        return finish(q, best, best_d2);
    }

    // Reference implementation; the grid query must match it exactly.
    NearestSegment query_brute(Complex q) const {
        double best_d2 = std::numeric_limits<double>::infinity();
        int best = -1;
        for (int s = 0; s < static_cast<int>(segs_.size()); ++s) {
            double d2 = point_segment_dist2(q, segs_[s].a, segs_[s].b);
            if (d2 < best_d2) {
                best_d2 = d2;
                best = s;
            }
        }
        return finish(q, best, best_d2);
    }

    // Cheap lower bound for far-away points (distance to the bounding box).
    double bbox_lower_bound(Complex q) const {
        double dx = std::max({lo_.real() - q.real(), 0.0, q.real() - (lo_.real() + nx_ * cell_)});
        double dy = std::max({lo_.imag() - q.imag(), 0.0, q.imag() - (lo_.imag() + ny_ * cell_)});
        return std::hypot(dx, dy);
    }

  private:
    NearestSegment finish(Complex q, int best, double best_d2) const {
        NearestSegment out;
        out.segment = best;
        if (best < 0) return out;
        double t;
        point_segment_dist2(q, segs_[best].a, segs_[best].b, &t);
        out.dist = std::sqrt(best_d2);
        out.edge = segs_[best].edge;
        out.param = segs_[best].t0 + t * (segs_[best].t1 - segs_[best].t0);
        out.foot = segs_[best].a + t * (segs_[best].b - segs_[best].a);
        return out;
    }

    std::pair<int, int> cell_of(Complex p) const {
        int i = std::clamp(static_cast<int>((p.real() - lo_.real()) / cell_), 0, nx_ - 1);
        int j = std::clamp(static_cast<int>((p.imag() - lo_.imag()) / cell_), 0, ny_ - 1);
        return {i, j};
    }

    std::size_t idx(int i, int j) const { return std::size_t(j) * nx_ + i; }

    bool seg_touches_cell(const SegmentRecord& s, int ci, int cj) const {
        Complex clo{lo_.real() + ci * cell_, lo_.imag() + cj * cell_};
        Complex chi{clo.real() + cell_, clo.imag() + cell_};
        Complex c = 0.5 * (clo + chi);
        double r = 0.5 * cell_ * std::numbers::sqrt2 + 1e-12 * cell_;
        return point_segment_dist2(c, s.a, s.b) <= r * r;
    }

    double ring_lower_bound(Complex q, int ci, int cj, int r) const {
        if (r == 0) return 0;
        // Cells at ring r lie outside the inner box of half-width (r-1)+1 cells.
        double X0 = lo_.real() + (ci - r + 1) * cell_;
        double X1 = lo_.real() + (ci + r) * cell_;
        double Y0 = lo_.imag() + (cj - r + 1) * cell_;
        double Y1 = lo_.imag() + (cj + r) * cell_;
        double m = std::min(std::min(q.real() - X0, X1 - q.real()),
                            std::min(q.imag() - Y0, Y1 - q.imag()));
        return std::max(m, 0.0);
    }

    template <class F>
    void visit_ring(int ci, int cj, int r, F&& f) const {
        auto visit_cell = [&](int i, int j) {
            if (i < 0 || i >= nx_ || j < 0 || j >= ny_) return;
            for (int s : cells_[idx(i, j)]) f(s);
        };
        if (r == 0) {
            visit_cell(ci, cj);
            return;
        }
        for (int i = ci - r; i <= ci + r; ++i) {
            visit_cell(i, cj - r);
            visit_cell(i, cj + r);
        }
        for (int j = cj - r + 1; j <= cj + r - 1; ++j) {
            visit_cell(ci - r, j);
            visit_cell(ci + r, j);
        }
    }

    std::vector<SegmentRecord> segs_;
    std::vector<std::vector<int>> cells_;
    Complex lo_{0, 0};
    double cell_ = 1;
    int nx_ = 1, ny_ = 1;
};

// Uniform grid over a point set; exact nearest-distance queries.
class PointIndex {
  public:
    explicit PointIndex(const std::vector<Complex>& pts) : pts_(pts) {
        if (pts_.empty()) throw input_error("point index: empty point set");
        double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
        for (Complex p : pts_) {
            x0 = std::min(x0, p.real());
            x1 = std::max(x1, p.real());
            y0 = std::min(y0, p.imag());
            y1 = std::max(y1, p.imag());
        }
        lo_ = {x0, y0};
        double w = std::max(x1 - x0, 1e-300), h = std::max(y1 - y0, 1e-300);
        int n = std::max(1, static_cast<int>(std::sqrt(double(pts_.size()))));
        nx_ = std::min(1024, n);
        ny_ = std::min(1024, n);
        cell_ = std::max(w / nx_, h / ny_) * (1.0 + 1e-12);
        cells_.assign(std::size_t(nx_) * ny_, {});
        for (int i = 0; i < static_cast<int>(pts_.size()); ++i) {
            auto [ci, cj] = cell_of(pts_[i]);
            cells_[std::size_t(cj) * nx_ + ci].push_back(i);
        }
    }

    double nearest_dist(Complex q) const {
        double best_d2 = std::numeric_limits<double>::infinity();
        auto [ci, cj] = cell_of(q);
        int max_r = std::max({ci, nx_ - 1 - ci, cj, ny_ - 1 - cj});
        for (int r = 0; r <= max_r; ++r) {
            if (best_d2 < std::numeric_limits<double>::infinity()) {
                double lb = ring_lower_bound(q, ci, cj, r);
                if (lb * lb > best_d2) break;
            }
            visit_ring(ci, cj, r, [&](int i) { best_d2 = std::min(best_d2, std::norm(q - pts_[i])); });
        }
        return std::sqrt(best_d2);
    }

  private:
    std::pair<int, int> cell_of(Complex p) const {
        int i = std::clamp(static_cast<int>((p.real() - lo_.real()) / cell_), 0, nx_ - 1);
        int j = std::clamp(static_cast<int>((p.imag() - lo_.imag()) / cell_), 0, ny_ - 1);
        return {i, j};
    }

    double ring_lower_bound(Complex q, int ci, int cj, int r) const {
        if (r == 0) return 0;
        double X0 = lo_.real() + (ci - r + 1) * cell_;
        double X1 = lo_.real() + (ci + r) * cell_;
        double Y0 = lo_.imag() + (cj - r + 1) * cell_;
        double Y1 = lo_.imag() + (cj + r) * cell_;
        double m = std::min(std::min(q.real() - X0, X1 - q.real()),
                            std::min(q.imag() - Y0, Y1 - q.imag()));
        return std::max(m, 0.0);
    }

    template <class F>
    void visit_ring(int ci, int cj, int r, F&& f) const {
        auto visit_cell = [&](int i, int j) {
            if (i < 0 || i >= nx_ || j < 0 || j >= ny_) return;
            for (int s : cells_[std::size_t(j) * nx_ + i]) f(s);
        };
        if (r == 0) {
            visit_cell(ci, cj);
            return;
        }
        for (int i = ci - r; i <= ci + r; ++i) {
            visit_cell(i, cj - r);
            visit_cell(i, cj + r);
        }
        for (int j = cj - r + 1; j <= cj + r - 1; ++j) {
            visit_cell(ci - r, j);
            visit_cell(ci + r, j);
        }
    }

    std::vector<Complex> pts_;
    std::vector<std::vector<int>> cells_;
    Complex lo_{0, 0};
    double cell_ = 1;
    int nx_ = 1, ny_ = 1;
};

// ---------------------------------------------------------------------------
// operations

inline double directed_hausdorff(const std::vector<Complex>& a, const PointIndex& b_index) {
    double worst = 0;
    for (Complex p : a) worst = std::max(worst, b_index.nearest_dist(p));
    return worst;
}

inline double hausdorff_distance(const std::vector<Complex>& a, const std::vector<Complex>& b) {
    if (a.empty() || b.empty()) throw input_error("hausdorff distance of empty set");
    PointIndex ia(a), ib(b);
    return std::max(directed_hausdorff(a, ib), directed_hausdorff(b, ia));
}

// Points along all polylines with consecutive gaps <= spacing; includes every
// tree vertex. Exact duplicates are removed.
inline std::vector<Complex> sample_points(const GeomTree& t, double spacing) {
    if (spacing <= 0) throw input_error("sample spacing must be positive");
    std::vector<Complex> pts = t.vertices;
    for (const auto& e : t.edges)
        for (std::size_t i = 1; i < e.polyline.size(); ++i) {
            Complex a = e.polyline[i - 1], b = e.polyline[i];
            double L = std::abs(b - a);
            int k = std::max(1, static_cast<int>(std::ceil(L / spacing)));
            for (int j = 0; j <= k; ++j) pts.push_back(a + (double(j) / k) * (b - a));
        }
    std::sort(pts.begin(), pts.end(), [](Complex u, Complex v) {
        return u.real() != v.real() ? u.real() < v.real() : u.imag() < v.imag();
    });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    return pts;
}

// Rotation at each vertex sorts incident edges by the angle of their initial
// polyline direction, counterclockwise.
inline PlaneTree derive_rotation_system(const GeomTree& t) {
    PlaneTree out;
    out.vertex_count = static_cast<int>(t.vertices.size());
    out.rotations.assign(out.vertex_count, {});
    std::vector<std::vector<std::pair<double, int>>> slots(out.vertex_count);
    for (const auto& e : t.edges) {
        if (e.polyline.size() < 2) throw input_error("edge polyline needs at least 2 points");
        Complex df = e.polyline[1] - e.polyline[0];
        Complex dt = e.polyline[e.polyline.size() - 2] - e.polyline.back();
        slots[e.from].push_back({std::atan2(df.imag(), df.real()), e.to});
        slots[e.to].push_back({std::atan2(dt.imag(), dt.real()), e.from});
    }
    for (int v = 0; v < out.vertex_count; ++v) {
        auto& s = slots[v];
        std::sort(s.begin(), s.end());
        for (std::size_t i = 1; i < s.size(); ++i)
            if (std::abs(s[i].first - s[i - 1].first) < 1e-12)
                throw input_error("degenerate embedding: equal initial angles at a vertex");
        for (auto& [ang, w] : s) out.rotations[v].push_back(w);
    }
    if (auto bad = validate(out)) throw input_error("derived combinatorics invalid: " + *bad);
    return out;
}

// Full geometric validation: endpoint coincidence, derived combinatorics and
// planarity (no two polylines closer than tol except at shared vertices).
inline void validate_geometry(const GeomTree& t, double endpoint_tol = -1) {
    double diam = t.diameter();
    if (endpoint_tol < 0) endpoint_tol = 1e-9 * std::max(diam, 1e-12);
    for (const auto& e : t.edges) {
        if (e.from < 0 || e.from >= static_cast<int>(t.vertices.size()) || e.to < 0 ||
            e.to >= static_cast<int>(t.vertices.size()))
            throw input_error("edge endpoint id out of range");
        if (e.polyline.size() < 2) throw input_error("edge polyline needs at least 2 points");
        if (std::abs(e.polyline.front() - t.vertices[e.from]) > endpoint_tol ||
            std::abs(e.polyline.back() - t.vertices[e.to]) > endpoint_tol)
            throw input_error("polyline endpoints do not coincide with vertex positions");
    }
    derive_rotation_system(t);

    // planarity: candidate pairs are culled by a uniform grid sweep; any two
    // segments closer than prox must co-occupy the same or adjacent cells
    double prox = 1e-12 * std::max(diam, 1e-12);
    struct SegInfo {
        Complex a, b;
        int edge;
        int pos;  // position within the edge polyline
    };
    std::vector<SegInfo> segs;
    double total_len = 0;
    for (int e = 0; e < static_cast<int>(t.edges.size()); ++e) {
        const auto& pl = t.edges[e].polyline;
        for (std::size_t i = 1; i < pl.size(); ++i)
            if (std::abs(pl[i] - pl[i - 1]) > 0) {
                segs.push_back({pl[i - 1], pl[i], e, static_cast<int>(i) - 1});
                total_len += std::abs(pl[i] - pl[i - 1]);
            }
    }
    if (segs.empty()) return;

    Complex lo, hi;
    t.bounding_box(lo, hi);
    double w = std::max(hi.real() - lo.real(), 1e-300);
    double h = std::max(hi.imag() - lo.imag(), 1e-300);
    double cell = std::max(total_len / segs.size(), std::max(w, h) / 1024.0);
    int nx = std::max(1, std::min(1024, static_cast<int>(w / cell) + 1));
    int ny = std::max(1, std::min(1024, static_cast<int>(h / cell) + 1));
    cell = std::max(w / nx, h / ny) * (1 + 1e-12);
    std::vector<std::vector<int>> cells(std::size_t(nx) * ny);
    auto cell_of = [&](Complex p) {
        int i = std::clamp(static_cast<int>((p.real() - lo.real()) / cell), 0, nx - 1);
        int j = std::clamp(static_cast<int>((p.imag() - lo.imag()) / cell), 0, ny - 1);
        return std::pair{i, j};
    };
    for (int s = 0; s < static_cast<int>(segs.size()); ++s) {
        auto [i0, j0] = cell_of(segs[s].a);
        auto [i1, j1] = cell_of(segs[s].b);
        for (int cj = std::min(j0, j1); cj <= std::max(j0, j1); ++cj)
            for (int ci = std::min(i0, i1); ci <= std::max(i0, i1); ++ci)
                cells[std::size_t(cj) * nx + ci].push_back(s);
    }

    auto seg_seg_dist = [](Complex a, Complex b, Complex c, Complex d) {
        auto sgn = [](double x) { return (x > 0) - (x < 0); };
        int s1 = sgn(cross(b - a, c - a)), s2 = sgn(cross(b - a, d - a));
        int s3 = sgn(cross(d - c, a - c)), s4 = sgn(cross(d - c, b - c));
        if (s1 * s2 < 0 && s3 * s4 < 0) return 0.0;  // proper crossing
        double m = point_segment_dist2(a, c, d);
        m = std::min(m, point_segment_dist2(b, c, d));
        m = std::min(m, point_segment_dist2(c, a, b));
        m = std::min(m, point_segment_dist2(d, a, b));
        return std::sqrt(m);
    };

    auto shares_vertex = [&](const SegInfo& u, const SegInfo& v) -> std::optional<Complex> {
        const auto& eu = t.edges[u.edge];
        const auto& ev = t.edges[v.edge];
        for (int a : {eu.from, eu.to})
            for (int b : {ev.from, ev.to})
                if (a == b) return t.vertices[a];
        return std::nullopt;
    };

    auto check_pair = [&](int si, int sj) {
        const auto& u = segs[si];
        const auto& v = segs[sj];
        if (u.edge == v.edge && std::abs(u.pos - v.pos) <= 1) return;  // consecutive pieces
        double d = seg_seg_dist(u.a, u.b, v.a, v.b);
        if (d > prox) return;
        if (u.edge != v.edge) {
            auto pv = shares_vertex(u, v);
            if (pv) {
                bool u_end = std::abs(u.a - *pv) <= endpoint_tol || std::abs(u.b - *pv) <= endpoint_tol;
                bool v_end = std::abs(v.a - *pv) <= endpoint_tol || std::abs(v.b - *pv) <= endpoint_tol;
                if (u_end && v_end) {
                    Complex du = (std::abs(u.a - *pv) <= endpoint_tol) ? u.b - u.a : u.a - u.b;
                    Complex dv = (std::abs(v.a - *pv) <= endpoint_tol) ? v.b - v.a : v.a - v.b;
                    if (std::abs(cross(du, dv)) <= 1e-12 * std::abs(du) * std::abs(dv) && dot(du, dv) > 0)
                        throw input_error("edges overlap beyond a shared vertex");
                    return;  // touching right at the shared vertex
                }
            }
        }
        throw input_error("edge polylines intersect away from shared vertices");
    };

    for (int cj = 0; cj < ny; ++cj)
        for (int ci = 0; ci < nx; ++ci) {
            const auto& here = cells[std::size_t(cj) * nx + ci];
            if (here.empty()) continue;
            for (std::size_t a = 0; a < here.size(); ++a)
                for (std::size_t b = a + 1; b < here.size(); ++b) check_pair(here[a], here[b]);
            // forward neighbors only, so each cell pair is visited once
            const int noff[4][2] = {{1, 0}, {-1, 1}, {0, 1}, {1, 1}};
            for (auto [dx, dy] : noff) {
                int ni = ci + dx, nj = cj + dy;
                if (ni < 0 || ni >= nx || nj < 0 || nj >= ny) continue;
                for (int si : here)
                    for (int sj : cells[std::size_t(nj) * nx + ni])
                        if (si != sj) check_pair(std::min(si, sj), std::max(si, sj));
            }
        }
}

// ---------------------------------------------------------------------------
// similarity alignment

struct AlignResult {
    Similarity map;   // applied to the movable tree's points
    double distance;  // Hausdorff distance after alignment (upper bound on optimum)
};

namespace detail {

inline double aligned_hausdorff(const std::vector<Complex>& p, const PointIndex& pidx,
                                const std::vector<Complex>& q, const PointIndex& qidx,
                                const Similarity& s) {
    double d1 = 0;
    for (Complex z : p) d1 = std::max(d1, qidx.nearest_dist(s(z)));
    Similarity inv = s.inverse();
    double d2 = 0;
    for (Complex z : q) d2 = std::max(d2, pidx.nearest_dist(inv(z)));
    return std::max(d1, s.scale * d2);
}

}  // namespace detail

// Moment matching, then a 256-way rotation grid, then coordinate descent.
// The reported distance is an upper bound on the optimal aligned distance.
// The movable tree is compared through its samples at `spacing` (default
// diameter/512).
inline AlignResult similarity_align(const GeomTree& movable, const std::vector<Complex>& target,
                                    double spacing = -1) {
    if (target.empty()) throw input_error("alignment target is empty");
    double diam = movable.diameter();
    if (spacing <= 0) spacing = std::max(diam / 512.0, 1e-12);
    std::vector<Complex> p = sample_points(movable, spacing);
    if (p.empty()) throw input_error("movable tree has no points");

    Complex cp{0, 0}, cq{0, 0};
    for (Complex z : p) cp += z;
    cp /= double(p.size());
    for (Complex z : target) cq += z;
    cq /= double(target.size());
    double rp = 0, rq = 0;
    for (Complex z : p) rp += std::norm(z - cp);
    for (Complex z : target) rq += std::norm(z - cq);
    rp = std::sqrt(rp / p.size());
    rq = std::sqrt(rq / target.size());
    if (rq <= 0) throw input_error("alignment target is degenerate (single point)");
    if (rp <= 0) throw input_error("movable tree is degenerate");

    PointIndex pidx(p), qidx(target);
    double s0 = rq / rp;

    auto make = [&](double logs, double theta, Complex tr) {
        Similarity s;
        s.scale = std::exp(logs);
        s.rotation = theta;
        s.translation = tr;
        return s;
    };
    auto eval = [&](double logs, double theta, Complex tr) {
        return detail::aligned_hausdorff(p, pidx, target, qidx, make(logs, theta, tr));
    };
    // translation chosen so the centroid maps to the target centroid
    auto centroid_tr = [&](double logs, double theta) {
        return cq - std::exp(logs) * std::polar(1.0, theta) * cp;
    };

    double best_logs = std::log(s0), best_theta = 0;
    Complex best_tr = centroid_tr(best_logs, 0);
    double best = eval(best_logs, 0, best_tr);
    for (int k = 0; k < 256; ++k) {
        double th = 2 * std::numbers::pi * k / 256.0;
        Complex tr = centroid_tr(best_logs, th);
        double d = eval(best_logs, th, tr);
        if (d < best) {
            best = d;
            best_theta = th;
            best_tr = tr;
        }
    }

    double step_theta = 2 * std::numbers::pi / 512.0;
    double step_logs = std::log(1.05);
    double step_tr = 0.02 * rq;
    for (int iter = 0; iter < 600; ++iter) {
        bool improved = false;
        struct Move {
            double dl, dt;
            Complex dtr;
        };
        const Move moves[] = {{step_logs, 0, {0, 0}},   {-step_logs, 0, {0, 0}},
                              {0, step_theta, {0, 0}},  {0, -step_theta, {0, 0}},
                              {0, 0, {step_tr, 0}},     {0, 0, {-step_tr, 0}},
                              {0, 0, {0, step_tr}},     {0, 0, {0, -step_tr}}};
        for (const auto& m : moves) {
            double d = eval(best_logs + m.dl, best_theta + m.dt, best_tr + m.dtr);
            if (d < best) {
                best = d;
                best_logs += m.dl;
                best_theta += m.dt;
                best_tr += m.dtr;
                improved = true;
            }
        }
        {
            Complex rtr = centroid_tr(best_logs, best_theta);
            double d = eval(best_logs, best_theta, rtr);
            if (d < best) {
                best = d;
                best_tr = rtr;
                improved = true;
            }
        }
        if (!improved) {
            step_theta *= 0.5;
            step_logs *= 0.5;
            step_tr *= 0.5;
            if (step_tr < 1e-10 * rq && step_theta < 1e-10) break;
        }
    }

    return {make(best_logs, best_theta, best_tr), best};
}

// ---------------------------------------------------------------------------
// deterministic straight-line embedding of a plane tree (solver hints)

namespace detail {

inline int subtree_edges(const PlaneTree& t, int v, int parent) {
    int n = 0;
    for (int w : t.rotations[v])
        if (w != parent) n += 1 + subtree_edges(t, w, v);
    return n;
}

}  // namespace detail

// Balloon layout honoring the rotation system; children occupy consecutive
// counterclockwise wedges proportional to subtree size.
inline GeomTree plant_layout(const PlaneTree& t, std::uint64_t jitter_seed = 0) {
    require_valid(t);
    GeomTree g;
    g.vertices.assign(t.vertex_count, {0, 0});
    if (t.vertex_count == 1) return g;

    // center of the tree: peel leaves (2-coloring of eccentricity); smallest id wins
    std::vector<int> deg(t.vertex_count);
    for (int v = 0; v < t.vertex_count; ++v) deg[v] = t.degree(v);
    std::vector<int> order, cur;
    std::vector<char> removed(t.vertex_count, 0);
    for (int v = 0; v < t.vertex_count; ++v)
        if (deg[v] <= 1) cur.push_back(v);
    int remaining = t.vertex_count;
    while (remaining > 2 && !cur.empty()) {
        std::vector<int> next;
        for (int v : cur) {
            removed[v] = 1;
            --remaining;
            for (int w : t.rotations[v])
                if (!removed[w] && --deg[w] == 1) next.push_back(w);
        }
        cur = std::move(next);
    }
    int root = 0;
    for (int v = 0; v < t.vertex_count; ++v)
        if (!removed[v]) {
            root = v;
            break;
        }

    struct Item {
        int v, parent;
        double angle0, angle1;  // wedge
        double len;
    };
    std::vector<Item> stack;
    {
        double total = t.edge_count();
        double a = 0;
        const auto& rot = t.rotations[root];
        for (int w : rot) {
            double wsize = 1 + detail::subtree_edges(t, w, root);
            double span = 2 * std::numbers::pi * wsize / total;
            stack.push_back({w, root, a, a + span, 1.0});
            a += span;
        }
    }
    while (!stack.empty()) {
        Item it = stack.back();
        stack.pop_back();
        double mid = 0.5 * (it.angle0 + it.angle1);
        g.vertices[it.v] = g.vertices[it.parent] + std::polar(it.len, mid);
        const auto& rot = t.rotations[it.v];
        int d = static_cast<int>(rot.size());
        if (d > 1) {
            int back = 0;
            for (int i = 0; i < d; ++i)
                if (rot[i] == it.parent) back = i;
            double total = 0;
            for (int i = 1; i < d; ++i) total += 1 + detail::subtree_edges(t, rot[(back + i) % d], it.v);
            double a = it.angle0;
            double width = it.angle1 - it.angle0;
            for (int i = 1; i < d; ++i) {
                int w = rot[(back + i) % d];
                double wsize = 1 + detail::subtree_edges(t, w, it.v);
                double span = width * wsize / total;
                stack.push_back({w, it.v, a, a + span, std::max(it.len * 0.8, 0.3)});
                a += span;
            }
        }
    }

    // fixed global rotation so layouts never align with the coordinate axes
    // (axial seeds sit exactly between rotational solution orientations for
    // symmetric trees, where Newton stalls on the symmetry saddle)
    for (auto& v : g.vertices) v *= std::polar(1.0, 0.5);

    if (jitter_seed != 0) {
        std::mt19937_64 rng(jitter_seed);
        auto u = [&] { return (double(rng() >> 11) * 0x1p-53) - 0.5; };
        for (int v = 0; v < t.vertex_count; ++v) g.vertices[v] += Complex(0.12 * u(), 0.12 * u());
    }

    for (int v = 0; v < t.vertex_count; ++v)
        for (int w : t.rotations[v])
            if (v < w) g.edges.push_back({v, w, {g.vertices[v], g.vertices[w]}, ""});
    return g;
}

}  // namespace truetree
