#include "flowlab/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace flowlab {

namespace {

constexpr double kWidth = 640.0, kHeight = 480.0;
constexpr double kLeft = 70.0, kRight = 20.0, kTop = 40.0, kBottom = 50.0;

std::string escape(const std::string& s) {
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

// Piecewise-linear approximation of viridis.
std::string color(double t) {
    static const std::array<std::array<double, 3>, 5> stops = {
        {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
    t = std::clamp(t, 0.0, 1.0) * 4.0;
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(t), 3);
    const double w = t - static_cast<double>(i);
    int rgb[3];
    for (int k = 0; k < 3; ++k) rgb[k] = static_cast<int>(std::lround((1 - w) * stops[i][k] + w * stops[i + 1][k]));
    return fmt::format("#{:02x}{:02x}{:02x}", rgb[0], rgb[1], rgb[2]);
}

std::string header(const std::string& title, const std::string& comment) {
    std::string s = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n", kWidth,
        kHeight);
    if (!comment.empty()) s += "<!-- " + escape(comment) + " -->\n";
    s += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", kWidth, kHeight);
    s += fmt::format("<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
                     kWidth / 2, escape(title));
    return s;
}

}  // namespace

std::string svg_heatmap(const GridDensity& grid, const std::string& title, const std::string& comment,
                        std::size_t max_cells) {
    if (grid.dim() != 2) throw Error("svg_heatmap: two-dimensional grids only");
    const std::size_t nx = grid.extents[0], ny = grid.extents[1];
    const std::size_t fx = (nx + max_cells - 1) / max_cells, fy = (ny + max_cells - 1) / max_cells;
    const std::size_t mx = (nx + fx - 1) / fx, my = (ny + fy - 1) / fy;
    std::vector<double> block(mx * my, 0.0);
    for (std::size_t i = 0; i < nx; ++i)
        for (std::size_t j = 0; j < ny; ++j) block[(i / fx) * my + j / fy] += grid.masses[i * ny + j];
    const double top = *std::max_element(block.begin(), block.end());

    const double side = std::min(kWidth - kLeft - kRight, kHeight - kTop - kBottom);
    const double cw = side / static_cast<double>(mx), ch = side / static_cast<double>(my);
    std::string s = header(title, comment);
    for (std::size_t i = 0; i < mx; ++i) {
        for (std::size_t j = 0; j < my; ++j) {
            const double v = top > 0.0 ? block[i * my + j] / top : 0.0;
            // First axis runs left to right, second axis bottom to top.
            s += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\"/>\n",
                             kLeft + static_cast<double>(i) * cw, kTop + side - static_cast<double>(j + 1) * ch,
                             cw + 0.05, ch + 0.05, color(v));
        }
    }
    const Box b = grid.bounds();
    s += fmt::format(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">x: [{:.3g}, {:.3g}]  y: [{:.3g}, {:.3g}]</text>\n",
        kLeft, kTop + side + 20, b.lower[0], b.upper[0], b.lower[1], b.upper[1]);
    s += "</svg>\n";
    return s;
}

std::string svg_line_chart(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                           const std::string& y_label, bool log_y, const std::string& comment) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    auto ty = [&](double y) { return log_y ? std::log10(y) : y; };
    for (const auto& s : series) {
        for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) {
            if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k]) || (log_y && s.y[k] <= 0.0)) continue;
            x0 = std::min(x0, s.x[k]);
            x1 = std::max(x1, s.x[k]);
            y0 = std::min(y0, ty(s.y[k]));
            y1 = std::max(y1, ty(s.y[k]));
        }
    }
    if (!(x1 >= x0)) x0 = 0.0, x1 = 1.0;
    if (!(y1 >= y0)) y0 = 0.0, y1 = 1.0;
    if (x1 == x0) x1 = x0 + 1.0;
    if (y1 == y0) y1 = y0 + 1.0;
    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return kTop + ph - (ty(y) - y0) / (y1 - y0) * ph; };

    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    std::string s = header(title, comment);
    s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", kLeft,
                     kTop, pw, ph);
    for (int k = 0; k <= 4; ++k) {
        const double fx = x0 + (x1 - x0) * k / 4.0, fy = y0 + (y1 - y0) * k / 4.0;
        s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{:.3g}</text>\n",
                         kLeft + pw * k / 4.0, kTop + ph + 16, fx);
        s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{:.3g}</text>\n",
                         kLeft - 6, kTop + ph - ph * k / 4.0 + 4, log_y ? std::pow(10.0, fy) : fy);
    }
    s += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
                     kLeft + pw / 2, kHeight - 12, escape(x_label));
    s += fmt::format("<text x=\"16\" y=\"{0}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">{1}</text>\n",
                     kTop + ph / 2, escape(y_label));
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& ser = series[i];
        std::string points;
        for (std::size_t k = 0; k < std::min(ser.x.size(), ser.y.size()); ++k) {
            if (!std::isfinite(ser.x[k]) || !std::isfinite(ser.y[k]) || (log_y && ser.y[k] <= 0.0)) continue;
            points += fmt::format("{:.2f},{:.2f} ", px(ser.x[k]), py(ser.y[k]));
        }
        const char* c = palette[i % 6];
        s += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", c, points);
        s += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{}\">{}</text>\n",
                         kLeft + pw - 150, kTop + 16 + 14 * static_cast<double>(i), c, escape(ser.name));
    }
    s += "</svg>\n";
    return s;
}

}  // namespace flowlab
