#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "mergescope/errors.hpp"

namespace mergescope {

// Deterministic SVG heatmaps: plain rects and text, integer layout, fixed
// color ramps, so identical data produces identical bytes.
//
// Ramps (linear interpolation in 8-bit RGB):
//   sequential : white (255,255,255) -> red (180,4,38), over [vmin, vmax]
//   diverging  : blue (59,76,192) -> white -> red (180,4,38), centered at 0
// Undefined cells are grey (221,221,221) and annotated "NA".

struct HeatmapOptions {
    std::string title;
    bool diverging = false;
    double vmin = 0.0;
    double vmax = 1.0;
    int cell_size = 56;
    std::vector<std::string> column_footer; // optional extra annotation row
};

namespace detail {

inline std::string xml_escape(const std::string & s) {
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

inline std::string ramp_color(double v, const HeatmapOptions & opt) {
    auto lerp = [](int a, int b, double t) {
        return static_cast<int>(std::lround(a + (b - a) * t));
    };
    int r;
    int g;
    int b;
    if (opt.diverging) {
        const double span = std::max(std::fabs(opt.vmin), std::fabs(opt.vmax));
        const double t = span > 0.0 ? std::clamp(v / span, -1.0, 1.0) : 0.0;
        if (t < 0.0) {
            r = lerp(255, 59, -t);
            g = lerp(255, 76, -t);
            b = lerp(255, 192, -t);
        } else {
            r = lerp(255, 180, t);
            g = lerp(255, 4, t);
            b = lerp(255, 38, t);
        }
    } else {
        const double span = opt.vmax - opt.vmin;
        const double t = span > 0.0 ? std::clamp((v - opt.vmin) / span, 0.0, 1.0) : 0.0;
        r = lerp(255, 180, t);
        g = lerp(255, 4, t);
        b = lerp(255, 38, t);
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "rgb(%d,%d,%d)", r, g, b);
    return buf;
}

inline std::string fixed3(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

} // namespace detail

inline std::string svg_heatmap(const std::vector<std::string> & row_labels,
                               const std::vector<std::string> & col_labels,
                               const std::vector<std::vector<std::optional<double>>> & values,
                               const HeatmapOptions & opt) {
    if (values.size() != row_labels.size()) throw Error("svg_heatmap: row count mismatch");
    for (const auto & row : values) {
        if (row.size() != col_labels.size()) throw Error("svg_heatmap: column count mismatch");
    }
    if (!opt.column_footer.empty() && opt.column_footer.size() != col_labels.size()) {
        throw Error("svg_heatmap: footer count mismatch");
    }

    const int cell = opt.cell_size;
    const int left = 120;
    const int top = opt.title.empty() ? 28 : 52;
    const int footer = opt.column_footer.empty() ? 0 : 22;
    const int width = left + cell * static_cast<int>(col_labels.size()) + 16;
    const int height = top + cell * static_cast<int>(row_labels.size()) + footer + 16;

    std::string svg;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                  "font-family=\"monospace\" font-size=\"11\">\n",
                  width, height);
    svg += buf;
    if (!opt.title.empty()) {
        std::snprintf(buf, sizeof(buf), "<text x=\"%d\" y=\"20\" font-size=\"14\">%s</text>\n",
                      left, detail::xml_escape(opt.title).c_str());
        svg += buf;
    }
    for (std::size_t c = 0; c < col_labels.size(); ++c) {
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">%s</text>\n",
                      left + static_cast<int>(c) * cell + cell / 2, top - 6,
                      detail::xml_escape(col_labels[c]).c_str());
        svg += buf;
    }
    for (std::size_t r = 0; r < row_labels.size(); ++r) {
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"%d\" text-anchor=\"end\">%s</text>\n", left - 8,
                      top + static_cast<int>(r) * cell + cell / 2 + 4,
                      detail::xml_escape(row_labels[r]).c_str());
        svg += buf;
        for (std::size_t c = 0; c < col_labels.size(); ++c) {
            const int x = left + static_cast<int>(c) * cell;
            const int y = top + static_cast<int>(r) * cell;
            const auto & v = values[r][c];
            const std::string color = v ? detail::ramp_color(*v, opt) : "rgb(221,221,221)";
            std::snprintf(buf, sizeof(buf),
                          "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"%s\" "
                          "stroke=\"rgb(255,255,255)\"/>\n",
                          x, y, cell, cell, color.c_str());
            svg += buf;
            const std::string label = v ? detail::fixed3(*v) : "NA";
            std::snprintf(buf, sizeof(buf),
                          "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">%s</text>\n",
                          x + cell / 2, y + cell / 2 + 4, label.c_str());
            svg += buf;
        }
    }
    if (!opt.column_footer.empty()) {
        const int y = top + cell * static_cast<int>(row_labels.size()) + 16;
        for (std::size_t c = 0; c < col_labels.size(); ++c) {
            std::snprintf(buf, sizeof(buf),
                          "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">%s</text>\n",
                          left + static_cast<int>(c) * cell + cell / 2, y,
                          detail::xml_escape(opt.column_footer[c]).c_str());
            svg += buf;
        }
    }
    svg += "</svg>\n";
    return svg;
}

} // namespace mergescope
