#pragma once

// Tiny SVG line-chart emitter. Just enough for decay-curve plots: axes, tick
// labels, one polyline per series, and a legend. Output bytes are
// deterministic for identical input.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace ant {

struct SvgSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

namespace detail {

inline std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

inline std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace detail

inline std::string line_chart_svg(const std::string& title, const std::string& x_label,
                                  const std::string& y_label,
                                  const std::vector<SvgSeries>& series) {
    if (series.empty()) throw std::invalid_argument("chart needs at least one series");
    double x_lo = 0.0, x_hi = 0.0, y_lo = 0.0, y_hi = 0.0;
    bool first = true;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size() || s.x.empty()) {
            throw std::invalid_argument("series '" + s.label + "' has mismatched or empty data");
        }
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (first) {
                x_lo = x_hi = s.x[i];
                y_lo = y_hi = s.y[i];
                first = false;
            }
            x_lo = std::min(x_lo, s.x[i]);
            x_hi = std::max(x_hi, s.x[i]);
            y_lo = std::min(y_lo, s.y[i]);
            y_hi = std::max(y_hi, s.y[i]);
        }
    }
    if (x_hi == x_lo) x_hi = x_lo + 1.0;
    if (y_hi == y_lo) {
        y_lo -= 0.5;
        y_hi += 0.5;
    }

    constexpr double kW = 640.0, kH = 400.0;
    constexpr double kLeft = 64.0, kRight = 24.0, kTop = 40.0, kBottom = 48.0;
    const double plot_w = kW - kLeft - kRight;
    const double plot_h = kH - kTop - kBottom;
    auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * plot_w; };
    auto py = [&](double y) { return kTop + (y_hi - y) / (y_hi - y_lo) * plot_h; };

    static const char* kPalette[] = {"#1f6fb2", "#d1495b", "#3a7d44", "#8a4fbe", "#b07d2b"};
    constexpr int kPaletteSize = 5;

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
           "viewBox=\"0 0 640 400\">\n";
    out += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    out += "<text x=\"320\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"15\">" +
           detail::xml_escape(title) + "</text>\n";

    // axes with five ticks each
    out += "<g stroke=\"#444\" stroke-width=\"1\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out += "<line x1=\"" + detail::fmt("%.1f", kLeft) + "\" y1=\"" + detail::fmt("%.1f", kTop) +
           "\" x2=\"" + detail::fmt("%.1f", kLeft) + "\" y2=\"" +
           detail::fmt("%.1f", kTop + plot_h) + "\"/>\n";
    out += "<line x1=\"" + detail::fmt("%.1f", kLeft) + "\" y1=\"" +
           detail::fmt("%.1f", kTop + plot_h) + "\" x2=\"" + detail::fmt("%.1f", kLeft + plot_w) +
           "\" y2=\"" + detail::fmt("%.1f", kTop + plot_h) + "\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        double fx = x_lo + (x_hi - x_lo) * i / 4.0;
        double fy = y_lo + (y_hi - y_lo) * i / 4.0;
        out += "<text x=\"" + detail::fmt("%.1f", px(fx)) + "\" y=\"" +
               detail::fmt("%.1f", kTop + plot_h + 16.0) +
               "\" text-anchor=\"middle\" stroke=\"none\" fill=\"#444\">" +
               detail::fmt("%.4g", fx) + "</text>\n";
        out += "<text x=\"" + detail::fmt("%.1f", kLeft - 8.0) + "\" y=\"" +
               detail::fmt("%.1f", py(fy) + 4.0) +
               "\" text-anchor=\"end\" stroke=\"none\" fill=\"#444\">" + detail::fmt("%.4g", fy) +
               "</text>\n";
    }
    out += "</g>\n";
    out += "<text x=\"" + detail::fmt("%.1f", kLeft + plot_w / 2.0) + "\" y=\"" +
           detail::fmt("%.1f", kH - 10.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
           detail::xml_escape(x_label) + "</text>\n";
    out += "<text x=\"16\" y=\"" + detail::fmt("%.1f", kTop + plot_h / 2.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
           "transform=\"rotate(-90 16 " +
           detail::fmt("%.1f", kTop + plot_h / 2.0) + ")\">" + detail::xml_escape(y_label) +
           "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % kPaletteSize];
        out += "<polyline fill=\"none\" stroke=\"";
        out += color;
        out += "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < series[s].x.size(); ++i) {
            if (i > 0) out += ' ';
            out += detail::fmt("%.2f", px(series[s].x[i])) + "," +
                   detail::fmt("%.2f", py(series[s].y[i]));
        }
        out += "\"/>\n";
        double ly = kTop + 8.0 + 16.0 * static_cast<double>(s);
        out += "<line x1=\"" + detail::fmt("%.1f", kLeft + plot_w - 110.0) + "\" y1=\"" +
               detail::fmt("%.1f", ly) + "\" x2=\"" + detail::fmt("%.1f", kLeft + plot_w - 90.0) +
               "\" y2=\"" + detail::fmt("%.1f", ly) + "\" stroke=\"";
        out += color;
        out += "\" stroke-width=\"1.5\"/>\n";
        out += "<text x=\"" + detail::fmt("%.1f", kLeft + plot_w - 84.0) + "\" y=\"" +
               detail::fmt("%.1f", ly + 4.0) + "\" font-family=\"sans-serif\" font-size=\"11\">" +
               detail::xml_escape(series[s].label) + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

}  // namespace ant
