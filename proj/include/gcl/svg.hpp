#pragma once

// Self-contained SVG charts: line plots with error bands, 2-D topology
// scatter with occupancy edges, prototype trajectories and a plain scatter.
// Every coordinate is printed with fixed precision so output is byte-stable.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "gcl/linalg.hpp"
#include "gcl/loss.hpp"

namespace gcl::svg {

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

inline std::string color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

inline std::string escape(const std::string& s) {
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

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void finish() {
        if (!(lo <= hi)) lo = 0.0, hi = 1.0;
        if (hi - lo < 1e-12) {
            lo -= 0.5;
            hi += 0.5;
        }
        const double pad = 0.04 * (hi - lo);
        lo -= pad;
        hi += pad;
    }
};

/// Plot frame: maps data coordinates to pixels and writes axes.
class Canvas {
public:
    Canvas(std::string title, Range x, Range y, int width = 640, int height = 420)
        : title_(std::move(title)), x_(x), y_(y), w_(width), h_(height) {}

    double px(double x) const { return kLeft + (x - x_.lo) / (x_.hi - x_.lo) * (w_ - kLeft - kRight); }
    double py(double y) const { return h_ - kBottom - (y - y_.lo) / (y_.hi - y_.lo) * (h_ - kTop - kBottom); }

    std::string& body() { return body_; }

    std::string render(const std::string& xlabel, const std::string& ylabel,
                       const std::vector<std::pair<std::string, std::string>>& legend) const {
        std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
        s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w_) + "\" height=\"" +
             std::to_string(h_) + "\" viewBox=\"0 0 " + std::to_string(w_) + " " + std::to_string(h_) +
             "\" font-family=\"sans-serif\" font-size=\"11\">\n";
        s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        s += "<text x=\"" + num(w_ / 2.0) + "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" +
             escape(title_) + "</text>\n";
        const double x0 = kLeft, x1 = w_ - kRight, y0 = h_ - kBottom, y1 = kTop;
        s += "<rect x=\"" + num(x0) + "\" y=\"" + num(y1) + "\" width=\"" + num(x1 - x0) + "\" height=\"" +
             num(y0 - y1) + "\" fill=\"none\" stroke=\"#333\"/>\n";
        for (int t = 0; t <= 4; ++t) {
            const double fx = x_.lo + (x_.hi - x_.lo) * t / 4.0;
            const double fy = y_.lo + (y_.hi - y_.lo) * t / 4.0;
            s += "<text x=\"" + num(px(fx)) + "\" y=\"" + num(y0 + 14) + "\" text-anchor=\"middle\">" +
                 tick(fx) + "</text>\n";
            s += "<text x=\"" + num(x0 - 4) + "\" y=\"" + num(py(fy) + 4) + "\" text-anchor=\"end\">" +
                 tick(fy) + "</text>\n";
        }
        s += "<text x=\"" + num((x0 + x1) / 2) + "\" y=\"" + num(h_ - 6.0) + "\" text-anchor=\"middle\">" +
             escape(xlabel) + "</text>\n";
        s += "<text transform=\"translate(14," + num((y0 + y1) / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
             escape(ylabel) + "</text>\n";
        s += body_;
        for (std::size_t i = 0; i < legend.size(); ++i) {
            const double ly = y1 + 14 + 14.0 * static_cast<double>(i);
            s += "<rect x=\"" + num(x1 - 110) + "\" y=\"" + num(ly - 8) + "\" width=\"10\" height=\"10\" fill=\"" +
                 legend[i].second + "\"/>\n";
            s += "<text x=\"" + num(x1 - 95) + "\" y=\"" + num(ly + 1) + "\">" + escape(legend[i].first) +
                 "</text>\n";
        }
        s += "</svg>\n";
        return s;
    }

private:
    static constexpr double kLeft = 64, kRight = 16, kTop = 28, kBottom = 36;
    std::string title_;
    Range x_, y_;
    int w_, h_;
    std::string body_;
};

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> band;  // half-width of the shaded band; empty for none
};

inline std::string line_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                             const std::vector<Series>& series) {
    Range xr, yr;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xr.add(s.x[i]);
            const double b = s.band.empty() ? 0.0 : s.band[i];
            yr.add(s.y[i] - b);
            yr.add(s.y[i] + b);
        }
    }
    xr.finish();
    yr.finish();
    Canvas c(title, xr, yr);
    std::vector<std::pair<std::string, std::string>> legend;
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        if (!s.band.empty() && !s.x.empty()) {
            std::string pts;
            for (std::size_t i = 0; i < s.x.size(); ++i) pts += num(c.px(s.x[i])) + "," + num(c.py(s.y[i] + s.band[i])) + " ";
            for (std::size_t i = s.x.size(); i-- > 0;) pts += num(c.px(s.x[i])) + "," + num(c.py(s.y[i] - s.band[i])) + " ";
            c.body() += "<polygon points=\"" + pts + "\" fill=\"" + color(k) + "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
        }
        std::string pts;
        for (std::size_t i = 0; i < s.x.size(); ++i) pts += num(c.px(s.x[i])) + "," + num(c.py(s.y[i])) + " ";
        c.body() += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color(k) + "\" stroke-width=\"1.5\"/>\n";
        legend.emplace_back(s.label, color(k));
    }
    return c.render(xlabel, ylabel, legend);
}

/// Samples (grey, or colored by label), valid prototypes and the CHL
/// occupancy edges between them. Uses the first two coordinates.
inline std::string topology_plot(const std::string& title, const Matrix& X, const PrototypeSet& P,
                                 const EdgeMatrix& edges, const VoronoiAssignment& a) {
    if (X.rows() < 2 || P.rows() < 2) throw DataError("topology_plot: needs at least two features");
    Range xr, yr;
    for (Eigen::Index i = 0; i < X.cols(); ++i) xr.add(X(0, i)), yr.add(X(1, i));
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
        if (a.counts[static_cast<std::size_t>(j)] > 0) xr.add(P(0, j)), yr.add(P(1, j));
    }
    xr.finish();
    yr.finish();
    Canvas c(title, xr, yr, 520, 520);
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
        c.body() += "<circle cx=\"" + num(c.px(X(0, i))) + "\" cy=\"" + num(c.py(X(1, i))) +
                    "\" r=\"1.5\" fill=\"#999\"/>\n";
    }
    for (Eigen::Index r = 0; r < P.cols(); ++r) {
        for (Eigen::Index s = r + 1; s < P.cols(); ++s) {
            if (edges.occupancy(r, s) == 0) continue;
            c.body() += "<line x1=\"" + num(c.px(P(0, r))) + "\" y1=\"" + num(c.py(P(1, r))) + "\" x2=\"" +
                        num(c.px(P(0, s))) + "\" y2=\"" + num(c.py(P(1, s))) + "\" stroke=\"" + color(0) +
                        "\" stroke-width=\"1.2\"/>\n";
        }
    }
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
        if (a.counts[static_cast<std::size_t>(j)] == 0) continue;
        c.body() += "<circle cx=\"" + num(c.px(P(0, j))) + "\" cy=\"" + num(c.py(P(1, j))) + "\" r=\"4\" fill=\"" +
                    color(1) + "\"/>\n";
    }
    return c.render("x0", "x1", {{"samples", "#999"}, {"prototypes", color(1)}, {"edges", color(0)}});
}

/// Paths of every prototype over the recorded snapshots (first two coordinates).
inline std::string trajectory_plot(const std::string& title, const Matrix& X,
                                   const std::vector<PrototypeSet>& snapshots) {
    if (snapshots.empty()) throw DataError("trajectory_plot: no snapshots");
    if (X.rows() < 2) throw DataError("trajectory_plot: needs at least two features");
    Range xr, yr;
    for (Eigen::Index i = 0; i < X.cols(); ++i) xr.add(X(0, i)), yr.add(X(1, i));
    for (const auto& s : snapshots)
        for (Eigen::Index j = 0; j < s.cols(); ++j) xr.add(s(0, j)), yr.add(s(1, j));
    xr.finish();
    yr.finish();
    Canvas c(title, xr, yr, 520, 520);
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
        c.body() += "<circle cx=\"" + num(c.px(X(0, i))) + "\" cy=\"" + num(c.py(X(1, i))) +
                    "\" r=\"1.2\" fill=\"#bbb\"/>\n";
    }
    const Eigen::Index k = snapshots.front().cols();
    for (Eigen::Index j = 0; j < k; ++j) {
        std::string pts;
        for (const auto& s : snapshots) pts += num(c.px(s(0, j))) + "," + num(c.py(s(1, j))) + " ";
        c.body() += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color(static_cast<std::size_t>(j)) +
                    "\" stroke-width=\"1\"/>\n";
        const auto& last = snapshots.back();
        c.body() += "<circle cx=\"" + num(c.px(last(0, j))) + "\" cy=\"" + num(c.py(last(1, j))) +
                    "\" r=\"3\" fill=\"" + color(static_cast<std::size_t>(j)) + "\"/>\n";
    }
    return c.render("x0", "x1", {{"samples", "#bbb"}});
}

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// Scatter of point groups with an optional y = x reference line.
inline std::string scatter_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                                const std::vector<std::pair<std::string, std::vector<Point>>>& groups,
                                bool diagonal) {
    Range xr, yr;
    for (const auto& g : groups)
        for (const auto& p : g.second) xr.add(p.x), yr.add(p.y);
    if (diagonal) {
        xr.add(yr.lo), xr.add(yr.hi);
        yr.add(xr.lo), yr.add(xr.hi);
    }
    xr.finish();
    yr.finish();
    Canvas c(title, xr, yr);
    if (diagonal) {
        const double lo = std::max(xr.lo, yr.lo), hi = std::min(xr.hi, yr.hi);
        c.body() += "<line x1=\"" + num(c.px(lo)) + "\" y1=\"" + num(c.py(lo)) + "\" x2=\"" + num(c.px(hi)) +
                    "\" y2=\"" + num(c.py(hi)) + "\" stroke=\"#777\" stroke-dasharray=\"4,3\"/>\n";
    }
    std::vector<std::pair<std::string, std::string>> legend;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        for (const auto& p : groups[g].second) {
            c.body() += "<circle cx=\"" + num(c.px(p.x)) + "\" cy=\"" + num(c.py(p.y)) + "\" r=\"3.5\" fill=\"" +
                        color(g) + "\"/>\n";
        }
        legend.emplace_back(groups[g].first, color(g));
    }
    return c.render(xlabel, ylabel, legend);
}

} // namespace gcl::svg
