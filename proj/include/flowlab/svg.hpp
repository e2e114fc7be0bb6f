#pragma once

#include <string>
#include <vector>

#include "flowlab/densities.hpp"

namespace flowlab {

/// Grid density as an SVG raster, block-averaged down to at most `max_cells` per axis.
std::string svg_heatmap(const GridDensity& grid, const std::string& title, const std::string& comment = {},
                        std::size_t max_cells = 120);

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

/// Line chart; non-positive values are skipped on a log axis.
std::string svg_line_chart(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                           const std::string& y_label, bool log_y = false, const std::string& comment = {});

}  // namespace flowlab
