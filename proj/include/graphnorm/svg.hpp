#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "graphnorm/tensor.hpp"

namespace graphnorm {

/// Minimal static SVG charts; fixed size and palette, no external
/// plotting dependency.
namespace svg {

inline const std::vector<std::string>& palette() {
    static const std::vector<std::string> colors = {
        "#4878cf", "#d65f5f", "#6acc65", "#b47cc7", "#c4ad66", "#77bedb"};
    return colors;
}

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

struct Series {
    std::string name;
    std::vector<double> values;
};

/// Grouped bar chart: one group per entry of `group_labels`, one bar per
/// series inside each group.
inline void bar_chart(const std::vector<std::string>& group_labels,
                      const std::vector<Series>& series, const std::string& title,
                      const std::filesystem::path& path) {
    if (series.empty() || group_labels.empty())
        throw ValidationError("bar_chart needs at least one group and one series");
    for (const Series& s : series)
        if (s.values.size() != group_labels.size())
            throw ValidationError("bar_chart series '" + s.name + "' length mismatch");

    const double width = 860, height = 420;
    const double left = 70, right = 30, top = 50, bottom = 60;
    const double plot_w = width - left - right, plot_h = height - top - bottom;

    double vmax = 0.0;
    for (const Series& s : series)
        for (double v : s.values) vmax = std::max(vmax, v);
    if (vmax <= 0.0) vmax = 1.0;
    vmax *= 1.1;

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='"
        << height << "'>\n";
    out << "<rect width='100%' height='100%' fill='white'/>\n";
    out << "<text x='" << width / 2 << "' y='28' text-anchor='middle' font-size='16' "
        << "font-family='sans-serif'>" << title << "</text>\n";

    // y axis with 5 ticks
    for (int t = 0; t <= 5; ++t) {
        const double v = vmax * t / 5.0;
        const double y = top + plot_h - plot_h * t / 5.0;
        out << "<line x1='" << left << "' y1='" << num(y) << "' x2='" << width - right
            << "' y2='" << num(y) << "' stroke='#dddddd'/>\n";
        out << "<text x='" << left - 8 << "' y='" << num(y + 4)
            << "' text-anchor='end' font-size='11' font-family='sans-serif'>" << num(v)
            << "</text>\n";
    }

    const double group_w = plot_w / group_labels.size();
    const double bar_w = group_w * 0.8 / series.size();
    for (std::size_t g = 0; g < group_labels.size(); ++g) {
        const double gx = left + g * group_w;
        for (std::size_t s = 0; s < series.size(); ++s) {
            const double h = plot_h * series[s].values[g] / vmax;
            out << "<rect x='" << num(gx + group_w * 0.1 + s * bar_w) << "' y='"
                << num(top + plot_h - h) << "' width='" << num(bar_w * 0.92)
                << "' height='" << num(h) << "' fill='"
                << palette()[s % palette().size()] << "'/>\n";
        }
        out << "<text x='" << num(gx + group_w / 2) << "' y='" << height - bottom + 18
            << "' text-anchor='middle' font-size='12' font-family='sans-serif'>"
            << group_labels[g] << "</text>\n";
    }

    // legend
    for (std::size_t s = 0; s < series.size(); ++s) {
        const double lx = left + s * 150;
        out << "<rect x='" << lx << "' y='" << height - 26 << "' width='12' height='12' fill='"
            << palette()[s % palette().size()] << "'/>\n";
        out << "<text x='" << lx + 16 << "' y='" << height - 16
            << "' font-size='12' font-family='sans-serif'>" << series[s].name << "</text>\n";
    }
    out << "</svg>\n";
}

/// Line plot over node indices, one polyline per series.
inline void line_plot(const std::vector<Series>& series, const std::string& title,
                      const std::string& y_label, const std::filesystem::path& path) {
    if (series.empty() || series[0].values.empty())
        throw ValidationError("line_plot needs data");
    const std::size_t n = series[0].values.size();
    for (const Series& s : series)
        if (s.values.size() != n)
            throw ValidationError("line_plot series '" + s.name + "' length mismatch");

    const double width = 860, height = 420;
    const double left = 70, right = 30, top = 50, bottom = 50;
    const double plot_w = width - left - right, plot_h = height - top - bottom;

    double vmax = 0.0;
    for (const Series& s : series)
        for (double v : s.values) vmax = std::max(vmax, v);
    if (vmax <= 0.0) vmax = 1.0;
    vmax *= 1.1;

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='"
        << height << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    out << "<text x='" << width / 2 << "' y='28' text-anchor='middle' font-size='16' "
        << "font-family='sans-serif'>" << title << "</text>\n";
    out << "<text x='16' y='" << top - 10 << "' font-size='11' font-family='sans-serif'>"
        << y_label << "</text>\n";

    for (int t = 0; t <= 5; ++t) {
        const double y = top + plot_h - plot_h * t / 5.0;
        out << "<line x1='" << left << "' y1='" << num(y) << "' x2='" << width - right
            << "' y2='" << num(y) << "' stroke='#dddddd'/>\n";
        out << "<text x='" << left - 8 << "' y='" << num(y + 4)
            << "' text-anchor='end' font-size='11' font-family='sans-serif'>"
            << num(vmax * t / 5.0) << "</text>\n";
    }

    for (std::size_t s = 0; s < series.size(); ++s) {
        out << "<polyline fill='none' stroke='" << palette()[s % palette().size()]
            << "' stroke-width='1.5' points='";
        for (std::size_t i = 0; i < n; ++i) {
            const double x = left + plot_w * (n == 1 ? 0.5 : double(i) / (n - 1));
            const double y = top + plot_h - plot_h * series[s].values[i] / vmax;
            out << num(x) << ',' << num(y) << ' ';
        }
        out << "'/>\n";
        const double lx = left + s * 170;
        out << "<line x1='" << lx << "' y1='" << height - 14 << "' x2='" << lx + 14
            << "' y2='" << height - 14 << "' stroke='" << palette()[s % palette().size()]
            << "' stroke-width='3'/>\n";
        out << "<text x='" << lx + 18 << "' y='" << height - 10
            << "' font-size='12' font-family='sans-serif'>" << series[s].name << "</text>\n";
    }
    out << "</svg>\n";
}

struct Chord {
    std::size_t i = 0;
    std::size_t j = 0;
    double weight = 0.0;
    std::string label;
};

/// Nodes on a circle, one chord per listed connection, stroke width
/// scaled by weight.
inline void circular_edge_plot(std::size_t n_r, const std::vector<Chord>& chords,
                               const std::string& title,
                               const std::filesystem::path& path) {
    if (n_r < 2) throw ValidationError("circular_edge_plot needs n_r >= 2");
    const double size = 520, cx = size / 2, cy = size / 2 + 10, radius = size / 2 - 70;
    constexpr double two_pi = 6.28318530717958647692;

    double wmax = 0.0;
    for (const Chord& c : chords) wmax = std::max(wmax, c.weight);
    if (wmax <= 0.0) wmax = 1.0;

    auto node_xy = [&](std::size_t idx) {
        const double a = two_pi * static_cast<double>(idx) / static_cast<double>(n_r) -
                         two_pi / 4.0;
        return std::pair<double, double>{cx + radius * std::cos(a),
                                         cy + radius * std::sin(a)};
    };

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << size << "' height='" << size
        << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    out << "<text x='" << cx << "' y='24' text-anchor='middle' font-size='15' "
        << "font-family='sans-serif'>" << title << "</text>\n";

    for (std::size_t c = 0; c < chords.size(); ++c) {
        auto [x1, y1] = node_xy(chords[c].i);
        auto [x2, y2] = node_xy(chords[c].j);
        out << "<path d='M " << num(x1) << ' ' << num(y1) << " Q " << num(cx) << ' '
            << num(cy) << ' ' << num(x2) << ' ' << num(y2) << "' fill='none' stroke='"
            << palette()[c % palette().size()] << "' stroke-width='"
            << num(1.0 + 4.0 * chords[c].weight / wmax) << "' opacity='0.8'/>\n";
    }

    for (std::size_t i = 0; i < n_r; ++i) {
        auto [x, y] = node_xy(i);
        out << "<circle cx='" << num(x) << "' cy='" << num(y)
            << "' r='4' fill='#333333'/>\n";
        const double lx = cx + (radius + 16) * (x - cx) / radius;
        const double ly = cy + (radius + 16) * (y - cy) / radius;
        out << "<text x='" << num(lx) << "' y='" << num(ly + 4)
            << "' text-anchor='middle' font-size='10' font-family='sans-serif'>" << i
            << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace svg
}  // namespace graphnorm
