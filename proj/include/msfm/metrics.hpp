#pragma once

#include <string>

#include "msfm/array.hpp"

namespace msfm {

/// Energy distance 2 E||X-Y|| - E||X-X'|| - E||Y-Y'|| between two sample sets
/// (rows are samples), using V-statistics so identical sets score exactly 0.
double energy_distance(const Array& x, const Array& y);

/// Scatter plot of 2-D points as a standalone SVG.
void write_scatter_svg(const std::string& path, const Array& points);

}  // namespace msfm
