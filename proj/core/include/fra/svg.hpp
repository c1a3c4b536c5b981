#pragma once

#include <string>
#include <vector>

namespace fra::svg {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

struct LinePlot {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
    /// Draws the y = x diagonal (ROC plots).
    bool diagonal = false;
};

std::string line_plot(const LinePlot& plot);

/// Count grid with row labels on the left and column labels on top.
std::string heatmap(const std::string& title, const std::vector<std::string>& labels,
                    const std::vector<std::vector<std::size_t>>& counts);

std::string escape(const std::string& text);

}  // namespace fra::svg
