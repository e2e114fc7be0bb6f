#pragma once

#include <iosfwd>
#include <string>

#include "flowlab/densities.hpp"

namespace flowlab {

/// CSV with one row per cell: cell-center coordinates x0..x{D-1} (x, y in 2D), then mass.
void write_grid_csv(std::ostream& out, const GridDensity& grid);

/// Binary dump, little-endian:
///   char[8] "FLOWGRID" | u32 version (1) | u32 D | u64 extents[D] | f64 origin[D] |
///   f64 spacing[D] | f64 masses[prod(extents)] (row-major, last axis fastest)
void write_grid_binary(std::ostream& out, const GridDensity& grid);
GridDensity read_grid_binary(std::istream& in);

void save_grid_binary(const std::string& path, const GridDensity& grid);
GridDensity load_grid_binary(const std::string& path);

}  // namespace flowlab
