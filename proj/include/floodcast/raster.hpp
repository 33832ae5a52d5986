#ifndef FLOODCAST_RASTER_HPP
#define FLOODCAST_RASTER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "floodcast/common.hpp"

namespace floodcast {

/// Row-major grid of doubles with an in-band nodata sentinel (NaN in memory,
/// -9999 in files). Row 0 is the northernmost row, matching the ASCII grid
/// layout. Binary extents use values 0/1; DEMs and depths use meters.
struct Raster {
    int rows = 0;
    int cols = 0;
    double cell_size = 16.0;   // meters (or degrees for precipitation grids)
    double origin_x = 0.0;     // xllcorner
    double origin_y = 0.0;     // yllcorner
    std::vector<double> values;

    Raster() = default;
    Raster(int rows_, int cols_, double fill = 0.0, double cell = 16.0)
        : rows(rows_), cols(cols_), cell_size(cell),
          values(static_cast<std::size_t>(rows_) * cols_, fill) {}

    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }

    bool in_bounds(int r, int c) const { return r >= 0 && r < rows && c >= 0 && c < cols; }
    bool is_nodata(int r, int c) const { return is_missing(at(r, c)); }
    std::size_t size() const { return values.size(); }

    bool same_geometry(const Raster& o) const {
        return rows == o.rows && cols == o.cols && cell_size == o.cell_size &&
               origin_x == o.origin_x && origin_y == o.origin_y;
    }

    // Wet test for binary extents: exactly 1 counts, nodata does not.
    bool wet(int r, int c) const { return at(r, c) == 1.0; }
};

// ESRI ASCII grid I/O. NODATA_value is fixed at -9999; reading maps it (and
// anything within 0.5 of it) to NaN, writing maps NaN back.
Raster read_asc(const std::string& path);
void write_asc(const Raster& g, const std::string& path);

// Serialize to/from an in-memory string (same format as the files).
Raster parse_asc(const std::string& text);
std::string to_asc(const Raster& g);

/// Renders a grid to an 8-bit binary PGM, mapping [min, max] of the finite
/// values linearly to [0, 255]; nodata renders as 0. A JSON sidecar
/// `<path>.json` documents the scale.
void write_pgm(const Raster& g, const std::string& path);

/// Majority-vote downsampling of a binary raster by an integer factor. A
/// coarse cell is wet when at least half of its valid fine pixels are wet;
/// all-nodata blocks stay nodata. Rows/cols must not be required to divide
/// evenly; edge blocks are partial.
Raster majority_downsample(const Raster& extent, int factor);

}  // namespace floodcast

#endif
