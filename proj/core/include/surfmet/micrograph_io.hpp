#pragma once

#include <string>

#include "surfmet/types.hpp"

// Height-map file format: a plain-text header (nx, ny, pixel pitches, unit,
// mask encoding) followed by row-major 32-bit little-endian floats. NaN
// encodes a non-measured pixel when mask_encoding = "nan". Plain CSV grids
// (one row per grid row, empty/nan cells masked) import as well.

namespace surfmet::micro {

void write_heightmap(const Micrograph& m, const std::string& path);
Micrograph read_heightmap(const std::string& path);

Micrograph read_csv_grid(const std::string& path, double pixel_dx_um = 1.0,
                         double pixel_dy_um = 1.0);

}  // namespace surfmet::micro
