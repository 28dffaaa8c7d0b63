#pragma once

// Deterministic SVG rendering: fixed viewBox from the joint bounding box plus
// a 5% margin, one group per layer, no timestamps.

#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "truetree/errors.hpp"
#include "truetree/geom_tree.hpp"

namespace truetree {

struct SvgLayer {
    const GeomTree* tree = nullptr;            // either a tree...
    const std::vector<Complex>* points = nullptr;  // ...or a point cloud
    std::string css_class;
    std::string color = "#000000";
    double stroke_width = 1.0;  // in percent of the drawing size
};

inline std::string render_svg(const std::vector<SvgLayer>& layers) {
    if (layers.empty()) throw input_error("no layers to render");
    double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
    auto grow = [&](Complex p) {
        x0 = std::min(x0, p.real());
        x1 = std::max(x1, p.real());
        y0 = std::min(y0, p.imag());
        y1 = std::max(y1, p.imag());
    };
    for (const auto& layer : layers) {
        if (layer.tree) {
            for (Complex v : layer.tree->vertices) grow(v);
            for (const auto& e : layer.tree->edges)
                for (Complex p : e.polyline) grow(p);
        }
        if (layer.points)
            for (Complex p : *layer.points) grow(p);
    }
    if (!(x1 >= x0)) throw input_error("empty layers");
    double w = std::max(x1 - x0, 1e-9), h = std::max(y1 - y0, 1e-9);
    double margin = 0.05 * std::max(w, h);
    x0 -= margin;
    y0 -= margin;
    w += 2 * margin;
    h += 2 * margin;
    double unit = std::max(w, h);

    std::string out;
    char buf[256];
    auto emit = [&](const char* fmt, auto... args) {
        std::snprintf(buf, sizeof buf, fmt, args...);
        out += buf;
    };
    // y axis flipped so the plane's orientation is preserved on screen
    emit("<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"%.6f %.6f %.6f %.6f\">\n", x0,
         -(y0 + h), w, h);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& layer = layers[i];
        std::string cls = layer.css_class.empty() ? ("layer" + std::to_string(i)) : layer.css_class;
        double sw = layer.stroke_width * unit / 100.0;
        emit("<g class=\"%s\" fill=\"none\" stroke=\"%s\" stroke-width=\"%.6f\">\n", cls.c_str(),
             layer.color.c_str(), sw);
        if (layer.tree) {
            for (const auto& e : layer.tree->edges) {
                out += "<path d=\"";
                for (std::size_t k = 0; k < e.polyline.size(); ++k)
                    emit("%c%.6f %.6f", k == 0 ? 'M' : 'L', e.polyline[k].real(),
                         -e.polyline[k].imag());
                out += "\"/>\n";
            }
            for (Complex v : layer.tree->vertices)
                emit("<circle cx=\"%.6f\" cy=\"%.6f\" r=\"%.6f\" fill=\"%s\" stroke=\"none\"/>\n",
                     v.real(), -v.imag(), 0.6 * sw, layer.color.c_str());
        }
        if (layer.points)
            for (Complex p : *layer.points)
                emit("<circle cx=\"%.6f\" cy=\"%.6f\" r=\"%.6f\" fill=\"%s\" stroke=\"none\"/>\n",
                     p.real(), -p.imag(), 0.5 * sw, layer.color.c_str());
        out += "</g>\n";
    }
    out += "</svg>\n";
    return out;
}

}  // namespace truetree
