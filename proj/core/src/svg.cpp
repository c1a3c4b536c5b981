#include "fra/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fra/csv.hpp"

namespace fra::svg {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

std::string num(double v) {
    const double r = std::round(v * 100.0) / 100.0;
    return csv::format_double(r == 0.0 ? 0.0 : r);
}

std::string text(double x, double y, const std::string& s, const char* anchor = "middle", int size = 12) {
    return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" + std::to_string(size) +
           "\" text-anchor=\"" + anchor + "\">" + escape(s) + "</text>\n";
}

}  // namespace

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string line_plot(const LinePlot& plot) {
    constexpr double W = 640, H = 420, L = 70, R = 150, T = 40, B = 50;
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    for (const auto& s : plot.series) {
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    }
    if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (plot.diagonal) {
        xmin = ymin = 0.0;
        xmax = ymax = 1.0;
    }
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) ymax = ymin + 1.0;
    const auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
    const auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

    std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) + "\" height=\"" + num(H) + "\" viewBox=\"0 0 " +
           num(W) + " " + num(H) + "\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += text(W / 2, 24, plot.title, "middle", 15);
    out += "<rect x=\"" + num(L) + "\" y=\"" + num(T) + "\" width=\"" + num(W - L - R) + "\" height=\"" +
           num(H - T - B) + "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double fx = xmin + (xmax - xmin) * k / 4.0;
        const double fy = ymin + (ymax - ymin) * k / 4.0;
        out += text(px(fx), H - B + 16, num(fx), "middle", 10);
        out += text(L - 6, py(fy) + 4, num(fy), "end", 10);
    }
    out += text(L + (W - L - R) / 2, H - 10, plot.x_label);
    out += "<text x=\"16\" y=\"" + num(T + (H - T - B) / 2) + "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
           num(T + (H - T - B) / 2) + ")\">" + escape(plot.y_label) + "</text>\n";
    if (plot.diagonal) {
        out += "<line x1=\"" + num(px(0)) + "\" y1=\"" + num(py(0)) + "\" x2=\"" + num(px(1)) + "\" y2=\"" + num(py(1)) +
               "\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>\n";
    }
    for (std::size_t si = 0; si < plot.series.size(); ++si) {
        const auto& s = plot.series[si];
        const char* color = kPalette[si % std::size(kPalette)];
        std::string pts;
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            pts += num(px(s.x[i])) + "," + num(py(s.y[i])) + " ";
        }
        if (!pts.empty()) pts.pop_back();
        out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
        const double ly = T + 14 + 18.0 * static_cast<double>(si);
        out += "<line x1=\"" + num(W - R + 10) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" + num(W - R + 30) + "\" y2=\"" +
               num(ly - 4) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
        out += text(W - R + 36, ly, s.name, "start", 11);
    }
    out += "</svg>\n";
    return out;
}

std::string heatmap(const std::string& title, const std::vector<std::string>& labels,
                    const std::vector<std::vector<std::size_t>>& counts) {
    const double cell = labels.size() > 12 ? 18.0 : 40.0;
    const double L = 90, T = 80;
    const double n = static_cast<double>(labels.size());
    const double W = L + cell * n + 20, H = T + cell * n + 20;
    std::size_t maxv = 1;
    for (const auto& row : counts) {
        for (auto v : row) maxv = std::max(maxv, v);
    }
    std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) + "\" height=\"" + num(H) + "\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += text(W / 2, 20, title, "middle", 14);
    out += text(L + cell * n / 2, 40, "predicted", "middle", 11);
    for (std::size_t c = 0; c < labels.size(); ++c) {
        out += text(L + cell * (static_cast<double>(c) + 0.5), T - 8, labels[c], "middle", 10);
        out += text(L - 6, T + cell * (static_cast<double>(c) + 0.5) + 4, labels[c], "end", 10);
    }
    for (std::size_t r = 0; r < counts.size(); ++r) {
        for (std::size_t c = 0; c < counts[r].size(); ++c) {
            const double level = static_cast<double>(counts[r][c]) / static_cast<double>(maxv);
            const int shade = static_cast<int>(std::lround(255.0 * (1.0 - level)));
            const std::string fill = "rgb(" + std::to_string(shade) + "," + std::to_string(shade) + ",255)";
            const double x = L + cell * static_cast<double>(c), y = T + cell * static_cast<double>(r);
            out += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(cell) + "\" height=\"" + num(cell) +
                   "\" fill=\"" + fill + "\" stroke=\"#ccc\"/>\n";
            if (cell >= 30) out += text(x + cell / 2, y + cell / 2 + 4, std::to_string(counts[r][c]), "middle", 11);
        }
    }
    out += "</svg>\n";
    return out;
}

}  // namespace fra::svg
