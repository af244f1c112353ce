#pragma once

// Minimal deterministic SVG plotting: line series and 2D scatters on a fixed
// 640x480 canvas with axes, ticks, and labels. Output depends only on the
// plot data (no timestamps), so identical inputs produce identical bytes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sdelab {

struct SvgSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;
    bool scatter = false;  // false: polyline, true: circles
};

inline SvgSeries line_series(std::string label,
                             const std::vector<double>& xs,
                             const std::vector<double>& ys) {
    if (xs.size() != ys.size())
        throw std::invalid_argument("line_series: x and y lengths differ");
    SvgSeries s;
    s.label = std::move(label);
    for (std::size_t i = 0; i < xs.size(); ++i) s.points.emplace_back(xs[i], ys[i]);
    return s;
}

inline SvgSeries scatter_series(std::string label,
                                const std::vector<double>& xs,
                                const std::vector<double>& ys) {
    SvgSeries s = line_series(std::move(label), xs, ys);
    s.scatter = true;
    return s;
}

struct SvgPlot {
    std::string title;
    std::string xlabel;
    std::string ylabel;
    std::vector<SvgSeries> series;
    std::string comment;  // embedded verbatim (sanitized) as an XML comment
};

namespace svgdetail {

constexpr double kWidth = 640.0, kHeight = 480.0;
constexpr double kLeft = 62.0, kRight = 18.0, kTop = 34.0, kBottom = 48.0;

inline const char* palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                   "#9467bd", "#ff7f0e", "#8c564b"};
    return colors[i % (sizeof colors / sizeof colors[0])];
}

inline std::string escape_xml(const std::string& s) {
    std::string out;
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

inline std::string fmt2(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string fmt_tick(double v) {
    // avoid "-0" labels from tiny negative rounding residue
    if (v == 0.0) v = 0.0;
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// round a raw step to 1/2/5 x 10^k
inline double nice_step(double raw) {
    if (!(raw > 0.0)) return 1.0;
    double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double frac = raw / mag;
    double nice = frac <= 1.0 ? 1.0 : frac <= 2.0 ? 2.0 : frac <= 5.0 ? 5.0 : 10.0;
    return nice * mag;
}

inline std::vector<double> ticks(double lo, double hi) {
    std::vector<double> out;
    double step = nice_step((hi - lo) / 4.0);
    double first = std::ceil(lo / step - 1e-9) * step;
    for (double v = first; v <= hi + 1e-9 * step; v += step) out.push_back(v);
    return out;
}

}  // namespace svgdetail

inline std::string render_svg(const SvgPlot& plot) {
    using namespace svgdetail;
    // data bounds over finite points only
    double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
    bool seen = false;
    for (const SvgSeries& s : plot.series)
        for (const auto& [x, y] : s.points) {
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            if (!seen) {
                xmin = xmax = x;
                ymin = ymax = y;
                seen = true;
            } else {
                xmin = std::min(xmin, x);
                xmax = std::max(xmax, x);
                ymin = std::min(ymin, y);
                ymax = std::max(ymax, y);
            }
        }
    auto pad = [](double& lo, double& hi) {
        if (hi - lo < 1e-12) {
            double w = std::max(1.0, std::abs(lo));
            lo -= 0.5 * w;
            hi += 0.5 * w;
        } else {
            double w = hi - lo;
            lo -= 0.05 * w;
            hi += 0.05 * w;
        }
    };
    pad(xmin, xmax);
    pad(ymin, ymax);

    auto px = [&](double x) {
        return kLeft + (x - xmin) / (xmax - xmin) * (kWidth - kLeft - kRight);
    };
    auto py = [&](double y) {
        return kHeight - kBottom - (y - ymin) / (ymax - ymin) * (kHeight - kTop - kBottom);
    };

    std::string out;
    out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
           "viewBox=\"0 0 640 480\">\n";
    if (!plot.comment.empty()) {
        std::string c = plot.comment;
        std::size_t pos;
        while ((pos = c.find("--")) != std::string::npos) c.replace(pos, 2, "- -");
        out += "<!-- " + c + " -->\n";
    }
    out += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"480\" fill=\"#ffffff\"/>\n";

    // axes
    out += "<line x1=\"" + fmt2(kLeft) + "\" y1=\"" + fmt2(kHeight - kBottom) + "\" x2=\"" +
           fmt2(kWidth - kRight) + "\" y2=\"" + fmt2(kHeight - kBottom) +
           "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    out += "<line x1=\"" + fmt2(kLeft) + "\" y1=\"" + fmt2(kTop) + "\" x2=\"" + fmt2(kLeft) +
           "\" y2=\"" + fmt2(kHeight - kBottom) + "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";

    // ticks and labels
    for (double t : ticks(xmin, xmax)) {
        double x = px(t);
        out += "<line x1=\"" + fmt2(x) + "\" y1=\"" + fmt2(kHeight - kBottom) + "\" x2=\"" +
               fmt2(x) + "\" y2=\"" + fmt2(kHeight - kBottom + 5) +
               "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
        out += "<text x=\"" + fmt2(x) + "\" y=\"" + fmt2(kHeight - kBottom + 18) +
               "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" +
               escape_xml(fmt_tick(t)) + "</text>\n";
    }
    for (double t : ticks(ymin, ymax)) {
        double y = py(t);
        out += "<line x1=\"" + fmt2(kLeft - 5) + "\" y1=\"" + fmt2(y) + "\" x2=\"" + fmt2(kLeft) +
               "\" y2=\"" + fmt2(y) + "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
        out += "<text x=\"" + fmt2(kLeft - 8) + "\" y=\"" + fmt2(y + 4) +
               "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" +
               escape_xml(fmt_tick(t)) + "</text>\n";
    }

    // titles
    if (!plot.title.empty())
        out += "<text x=\"" + fmt2(kWidth / 2) + "\" y=\"20\" font-family=\"sans-serif\" "
               "font-size=\"14\" text-anchor=\"middle\">" +
               escape_xml(plot.title) + "</text>\n";
    if (!plot.xlabel.empty())
        out += "<text x=\"" + fmt2((kLeft + kWidth - kRight) / 2) + "\" y=\"" +
               fmt2(kHeight - 10) +
               "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" +
               escape_xml(plot.xlabel) + "</text>\n";
    if (!plot.ylabel.empty())
        out += "<text x=\"16\" y=\"" + fmt2((kTop + kHeight - kBottom) / 2) +
               "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" "
               "transform=\"rotate(-90 16 " +
               fmt2((kTop + kHeight - kBottom) / 2) + ")\">" + escape_xml(plot.ylabel) +
               "</text>\n";

    // data
    for (std::size_t si = 0; si < plot.series.size(); ++si) {
        const SvgSeries& s = plot.series[si];
        const char* color = palette(si);
        if (s.scatter) {
            for (const auto& [x, y] : s.points) {
                if (!std::isfinite(x) || !std::isfinite(y)) continue;
                out += "<circle cx=\"" + fmt2(px(x)) + "\" cy=\"" + fmt2(py(y)) +
                       "\" r=\"2\" fill=\"" + color + "\" fill-opacity=\"0.6\"/>\n";
            }
        } else {
            std::string pts;
            for (const auto& [x, y] : s.points) {
                if (!std::isfinite(x) || !std::isfinite(y)) continue;
                if (!pts.empty()) pts += ' ';
                pts += fmt2(px(x)) + "," + fmt2(py(y));
            }
            if (!pts.empty())
                out += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
                       "\" stroke-width=\"1.5\"/>\n";
        }
        if (!s.label.empty()) {
            double ly = kTop + 14.0 * double(si) + 4.0;
            out += "<line x1=\"" + fmt2(kWidth - kRight - 120) + "\" y1=\"" + fmt2(ly) +
                   "\" x2=\"" + fmt2(kWidth - kRight - 100) + "\" y2=\"" + fmt2(ly) +
                   "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
            out += "<text x=\"" + fmt2(kWidth - kRight - 96) + "\" y=\"" + fmt2(ly + 4) +
                   "\" font-family=\"sans-serif\" font-size=\"11\">" + escape_xml(s.label) +
                   "</text>\n";
        }
    }
    out += "</svg>\n";
    return out;
}

inline void emit_svg(const SvgPlot& plot, const std::string& path) {
    std::string body = render_svg(plot);
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    std::size_t wrote = std::fwrite(body.data(), 1, body.size(), f);
    int rc = std::fclose(f);
    if (wrote != body.size() || rc != 0)
        throw std::runtime_error("write failed: " + path);
}

}  // namespace sdelab
