#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "qer/error.hpp"

namespace qer {

// Minimal deterministic SVG line plots: fixed canvas, fixed palette, fixed
// number formatting, no timestamps.
struct SvgSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

struct SvgPlot {
    std::string title;
    std::string xlabel;
    std::string ylabel;
    bool log_x = false;
    bool log_y = false;
    std::vector<SvgSeries> series;
    std::vector<std::pair<std::string, double>> hlines;  // reference levels
};

namespace detail {

inline std::string svg_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string svg_tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

inline std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace detail

inline std::string render_svg(const SvgPlot& plot) {
    constexpr double W = 640, H = 420, ml = 70, mr = 150, mt = 40, mb = 55;
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
    auto tx = [&](double v) { return plot.log_x ? std::log10(v) : v; };
    auto ty = [&](double v) { return plot.log_y ? std::log10(v) : v; };
    auto usable = [&](double x, double y) {
        return std::isfinite(x) && std::isfinite(y) && (!plot.log_x || x > 0.0) && (!plot.log_y || y > 0.0);
    };
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : plot.series)
        for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
            if (!usable(s.x[k], s.y[k])) continue;
            x0 = std::min(x0, tx(s.x[k]));
            x1 = std::max(x1, tx(s.x[k]));
            y0 = std::min(y0, ty(s.y[k]));
            y1 = std::max(y1, ty(s.y[k]));
        }
    for (const auto& [name, v] : plot.hlines)
        if (std::isfinite(v) && (!plot.log_y || v > 0.0)) {
            y0 = std::min(y0, ty(v));
            y1 = std::max(y1, ty(v));
        }
    if (!std::isfinite(x0)) x0 = 0.0, x1 = 1.0;
    if (!std::isfinite(y0)) y0 = 0.0, y1 = 1.0;
    if (x1 - x0 <= 0.0) x0 -= 0.5, x1 += 0.5;
    if (y1 - y0 <= 0.0) y0 -= 0.5, y1 += 0.5;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    const double pw = W - ml - mr, ph = H - mt - mb;
    auto px = [&](double v) { return ml + (tx(v) - x0) / (x1 - x0) * pw; };
    auto py = [&](double v) { return mt + ph - (ty(v) - y0) / (y1 - y0) * ph; };
    using detail::svg_num;

    std::string o;
    o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + svg_num(W) + "\" height=\"" + svg_num(H) +
         "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    o += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o += "<text x=\"" + svg_num(W / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
         detail::svg_escape(plot.title) + "</text>\n";
    o += "<rect x=\"" + svg_num(ml) + "\" y=\"" + svg_num(mt) + "\" width=\"" + svg_num(pw) + "\" height=\"" +
         svg_num(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double fx = x0 + (x1 - x0) * k / 4.0, fy = y0 + (y1 - y0) * k / 4.0;
        const double gx = ml + pw * k / 4.0, gy = mt + ph - ph * k / 4.0;
        const double vx = plot.log_x ? std::pow(10.0, fx) : fx, vy = plot.log_y ? std::pow(10.0, fy) : fy;
        o += "<text x=\"" + svg_num(gx) + "\" y=\"" + svg_num(mt + ph + 16) + "\" text-anchor=\"middle\">" +
             detail::svg_tick(vx) + "</text>\n";
        o += "<text x=\"" + svg_num(ml - 6) + "\" y=\"" + svg_num(gy + 4) + "\" text-anchor=\"end\">" +
             detail::svg_tick(vy) + "</text>\n";
    }
    o += "<text x=\"" + svg_num(ml + pw / 2) + "\" y=\"" + svg_num(H - 12) + "\" text-anchor=\"middle\">" +
         detail::svg_escape(plot.xlabel + (plot.log_x ? " (log)" : "")) + "</text>\n";
    o += "<text x=\"16\" y=\"" + svg_num(mt + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         svg_num(mt + ph / 2) + ")\">" + detail::svg_escape(plot.ylabel + (plot.log_y ? " (log)" : "")) +
         "</text>\n";
    for (const auto& [name, v] : plot.hlines) {
        if (!std::isfinite(v) || (plot.log_y && v <= 0.0)) continue;
        o += "<line x1=\"" + svg_num(ml) + "\" x2=\"" + svg_num(ml + pw) + "\" y1=\"" + svg_num(py(v)) +
             "\" y2=\"" + svg_num(py(v)) + "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
    }
    int legend = 0;
    for (std::size_t si = 0; si < plot.series.size(); ++si) {
        const auto& s = plot.series[si];
        const std::string color = palette[si % (sizeof palette / sizeof *palette)];
        std::string pts;
        for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
            if (!usable(s.x[k], s.y[k])) continue;
            pts += (pts.empty() ? "" : " ") + svg_num(px(s.x[k])) + "," + svg_num(py(s.y[k]));
            o += "<circle cx=\"" + svg_num(px(s.x[k])) + "\" cy=\"" + svg_num(py(s.y[k])) + "\" r=\"3\" fill=\"" +
                 color + "\"/>\n";
        }
        if (!pts.empty())
            o += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color + "\"/>\n";
        const double ly = mt + 12 + 16 * legend++;
        o += "<line x1=\"" + svg_num(W - mr + 10) + "\" x2=\"" + svg_num(W - mr + 28) + "\" y1=\"" + svg_num(ly - 4) +
             "\" y2=\"" + svg_num(ly - 4) + "\" stroke=\"" + color + "\"/>\n";
        o += "<text x=\"" + svg_num(W - mr + 32) + "\" y=\"" + svg_num(ly) + "\">" + detail::svg_escape(s.name) +
             "</text>\n";
    }
    o += "</svg>\n";
    return o;
}

}  // namespace qer
