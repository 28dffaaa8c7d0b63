#pragma once

// JSON schemas for every artifact the CLI reads or writes.

#include <cstdio>
#include <fstream>
#include <string>

#include <json.hpp>

#include "truetree/balancer.hpp"
#include "truetree/errors.hpp"
#include "truetree/geom_tree.hpp"
#include "truetree/harmonic.hpp"
#include "truetree/plane_tree.hpp"
#include "truetree/shabat.hpp"

namespace truetree {

using nlohmann::json;

inline json complex_to_json(Complex z) { return json::array({z.real(), z.imag()}); }

inline Complex complex_from_json(const json& j) {
    if (!j.is_array() || j.size() != 2) throw input_error("expected [re, im] pair");
    return {j[0].get<double>(), j[1].get<double>()};
}

// round-trip exact decimal rendering of a double
inline std::string decimal_string(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// ----- plane tree: { "vertices": N, "rotations": [[...], ...] } -----

inline json tree_to_json(const PlaneTree& t) {
    json j;
    j["vertices"] = t.vertex_count;
    j["rotations"] = t.rotations;
    return j;
}

inline PlaneTree tree_from_json(const json& j) {
    PlaneTree t;
    try {
        t.vertex_count = j.at("vertices").get<int>();
        t.rotations = j.at("rotations").get<std::vector<std::vector<int>>>();
    } catch (const json::exception& e) {
        throw input_error(std::string("bad tree JSON: ") + e.what());
    }
    require_valid(t);
    return t;
}

// ----- geometric tree -----

inline json geom_to_json(const GeomTree& t) {
    json j;
    j["vertices"] = json::array();
    for (Complex v : t.vertices) j["vertices"].push_back(complex_to_json(v));
    j["edges"] = json::array();
    for (const auto& e : t.edges) {
        json je;
        je["from"] = e.from;
        je["to"] = e.to;
        je["polyline"] = json::array();
        for (Complex p : e.polyline) je["polyline"].push_back(complex_to_json(p));
        if (!e.tag.empty()) je["tag"] = e.tag;
        j["edges"].push_back(je);
    }
    return j;
}

inline GeomTree geom_from_json(const json& j) {
    GeomTree t;
    try {
        for (const auto& v : j.at("vertices")) t.vertices.push_back(complex_from_json(v));
        for (const auto& je : j.at("edges")) {
            GeomEdge e;
            e.from = je.at("from").get<int>();
            e.to = je.at("to").get<int>();
            for (const auto& p : je.at("polyline")) e.polyline.push_back(complex_from_json(p));
            if (je.contains("tag")) e.tag = je["tag"].get<std::string>();
            t.edges.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw input_error(std::string("bad geometry JSON: ") + e.what());
    }
    return t;
}

// ----- point sets: [[re, im], ...] -----

inline json points_to_json(const std::vector<Complex>& pts) {
    json j = json::array();
    for (Complex p : pts) j.push_back(complex_to_json(p));
    return j;
}

inline std::vector<Complex> points_from_json(const json& j) {
    if (!j.is_array()) throw input_error("points file must be a JSON array");
    std::vector<Complex> pts;
    for (const auto& p : j) pts.push_back(complex_from_json(p));
    return pts;
}

// ----- Shabat polynomial -----

inline json poly_to_json(const ShabatPolynomial& p) {
    json j;
    j["degree"] = p.degree;
    j["coefficients"] = json::array();
    for (Complex c : p.coefficients)
        j["coefficients"].push_back(json::array({decimal_string(c.real()), decimal_string(c.imag())}));
    j["critical_points"] = json::array();
    for (const auto& c : p.critical_points) {
        json jc;
        jc["position"] = complex_to_json(c.position);
        jc["multiplicity"] = c.multiplicity;
        jc["target"] = c.target;
        j["critical_points"].push_back(jc);
    }
    j["residual"] = p.residual;
    j["normalization"] = {{"scale", p.normalization.scale},
                          {"rotation", p.normalization.rotation},
                          {"translation", complex_to_json(p.normalization.translation)}};
    return j;
}

inline ShabatPolynomial poly_from_json(const json& j) {
    ShabatPolynomial p;
    try {
        p.degree = j.at("degree").get<int>();
        for (const auto& c : j.at("coefficients")) {
            double re = std::stod(c.at(0).get<std::string>());
            double im = std::stod(c.at(1).get<std::string>());
            p.coefficients.push_back({re, im});
        }
        for (const auto& jc : j.at("critical_points"))
            p.critical_points.push_back({complex_from_json(jc.at("position")),
                                         jc.at("multiplicity").get<int>(),
                                         jc.at("target").get<int>()});
        p.residual = j.value("residual", 0.0);
        if (j.contains("normalization")) {
            p.normalization.scale = j["normalization"].value("scale", 1.0);
            p.normalization.rotation = j["normalization"].value("rotation", 0.0);
            if (j["normalization"].contains("translation"))
                p.normalization.translation = complex_from_json(j["normalization"]["translation"]);
        }
    } catch (const json::exception& e) {
        throw input_error(std::string("bad polynomial JSON: ") + e.what());
    }
    if (static_cast<int>(p.coefficients.size()) != p.degree + 1)
        throw input_error("coefficient count does not match the degree");
    return p;
}

// ----- measure tables -----

inline json measures_to_json(const MeasureTable& t) {
    json j;
    j["edges"] = t.edge_count;
    j["walkers"] = t.walkers;
    j["discarded"] = t.discarded;
    j["seed"] = t.seed;
    j["bins"] = t.bins;
    j["entries"] = json::array();
    for (int e = 0; e < t.edge_count; ++e)
        for (int side = 0; side < 2; ++side) {
            const SideStats& s = t.entries[e][side];
            json js;
            js["edge"] = e;
            js["side"] = side == 0 ? "left" : "right";
            js["hits"] = s.hits;
            js["measure"] = s.measure;
            js["stderr"] = s.std_error;
            js["histogram"] = s.histogram;
            j["entries"].push_back(js);
        }
    BalanceSummary sum = summarize(t);
    j["summary"] = {{"max_side_ratio_dev", sum.max_side_ratio_dev},
                    {"ratio_edges_used", sum.ratio_edges_used},
                    {"edge_measure_cv", sum.edge_measure_cv},
                    {"min_edge_measure", sum.min_edge_measure},
                    {"max_edge_measure", sum.max_edge_measure}};
    return j;
}

inline MeasureTable measures_from_json(const json& j) {
    MeasureTable t;
    try {
        t.edge_count = j.at("edges").get<int>();
        t.walkers = j.at("walkers").get<std::uint64_t>();
        t.discarded = j.value("discarded", std::uint64_t(0));
        t.seed = j.value("seed", std::uint64_t(0));
        t.bins = j.at("bins").get<int>();
        t.entries.assign(t.edge_count, {});
        for (const auto& js : j.at("entries")) {
            int e = js.at("edge").get<int>();
            int side = js.at("side").get<std::string>() == "left" ? 0 : 1;
            SideStats& s = t.entries.at(e)[side];
            s.hits = js.at("hits").get<std::uint64_t>();
            s.measure = js.at("measure").get<double>();
            s.std_error = js.value("stderr", 0.0);
            s.histogram = js.at("histogram").get<std::vector<std::uint64_t>>();
        }
    } catch (const json::exception& e) {
        throw input_error(std::string("bad measures JSON: ") + e.what());
    }
    return t;
}

// ----- tooth plans (audit artifact written next to decorated trees) -----

inline json plan_to_json(const ToothPlan& p) {
    json j;
    j["n"] = p.n_exp;
    j["N"] = p.big_n;
    j["seg_exp"] = p.seg_exp;
    j["literal_scale"] = p.literal_scale;
    j["delta"] = p.delta;
    j["rescale"] = p.rescale;
    j["edges"] = json::array();
    for (const auto& ep : p.edges) {
        json je;
        je["edge"] = ep.edge;
        je["length"] = ep.length;
        je["j_start"] = ep.j_start;
        je["j_end"] = ep.j_end;
        je["cells"] = ep.cells;
        je["tip_at_start"] = ep.tip_at_start;
        je["tip_at_end"] = ep.tip_at_end;
        json hl = json::array(), hr = json::array();
        for (const auto& h : ep.heights) {
            hl.push_back(h[0]);
            hr.push_back(h[1]);
        }
        je["heights_left"] = hl;
        je["heights_right"] = hr;
        j["edges"].push_back(je);
    }
    j["repairs"] = p.repairs;
    return j;
}

// ----- file helpers -----

inline json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw input_error("cannot parse " + path + ": " + e.what());
    }
    return j;
}

inline void save_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw input_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

inline void save_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw input_error("cannot write " + path);
    out << text;
}

}  // namespace truetree
