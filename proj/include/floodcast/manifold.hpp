#ifndef FLOODCAST_MANIFOLD_HPP
#define FLOODCAST_MANIFOLD_HPP

#include <string>
#include <utility>
#include <vector>

#include "floodcast/raster.hpp"
#include "floodcast/thresholding.hpp"

namespace floodcast {

/// Water surface elevation on a coarse grid where one cell covers
/// factor x factor DEM pixels. Cells outside the wet region are invalid
/// (NaN height).
struct CoarseHeightMap {
    int factor = 32;
    int rows = 0;
    int cols = 0;
    std::vector<double> heights;  // NaN = invalid

    double& at(int r, int c) { return heights[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return heights[static_cast<std::size_t>(r) * cols + c]; }
    bool valid(int r, int c) const { return is_present(at(r, c)); }
};

/// Stage-sorted water height maps, the Manifold model's learned state.
struct HeightStack {
    std::string gauge_id;
    std::string dem_ref;
    int factor = 32;
    std::vector<std::pair<double, CoarseHeightMap>> entries;  // strictly increasing stage

    void validate() const;
};

struct LaplaceConfig {
    double omega = 1.7;            // successive over-relaxation factor
    double tolerance_m = 1e-4;     // max update at convergence
    int max_sweeps = 10000;
    double outlier_mad_factor = 3.0;
    double outlier_floor_m = 1e-3;  // discrepancies below this never drop a cell
    int outlier_rounds = 3;
};

/// Wet pixels adjacent (4-neighborhood) to a dry pixel; with
/// `count_border` also wet pixels on the raster edge or next to nodata.
std::vector<std::pair<int, int>> extract_boundaries(const Raster& extent, bool count_border = true);

/// Dirichlet cell for the coarse solve.
struct BoundaryCell {
    int r = 0, c = 0;
    double height = 0.0;
};

/// Drops Dirichlet cells whose height disagrees with the harmonic value
/// implied by their neighbors by more than max(3*MAD, floor), measured
/// around the median discrepancy. One cell per round, up to three rounds,
/// never below 4 cells. `wet` marks the coarse cells in the solve domain.
std::vector<BoundaryCell> remove_tension_outliers(const std::vector<BoundaryCell>& cells,
                                                  const std::vector<std::uint8_t>& wet, int rows, int cols,
                                                  const LaplaceConfig& cfg = {});

/// Solves the discrete Laplace equation (5-point stencil, Gauss-Seidel with
/// over-relaxation) over the wet cells with the given Dirichlet values.
/// Returns the heights; cells outside `wet` stay NaN. Unknown cells with no
/// path to a Dirichlet cell settle at the mean boundary height.
std::vector<double> solve_laplace(const std::vector<BoundaryCell>& dirichlet,
                                  const std::vector<std::uint8_t>& wet, int rows, int cols,
                                  const LaplaceConfig& cfg = {});

/// Reconstructs the water surface for one extent: samples the DEM at
/// shoreline pixels (wet pixels next to dry ones), aggregates the samples to
/// coarse cells by mean, removes tension outliers, and interpolates the
/// interior harmonically. An empty extent returns an empty map; an extent
/// with no shoreline (water everywhere) raises DataError.
CoarseHeightMap extent_to_height(const Raster& dem, const Raster& extent, int factor = 32,
                                 const LaplaceConfig& cfg = {});

/// Builds the stack: for every distinct training stage, predict the extent
/// with the Thresholding model and reconstruct its height map. Entries whose
/// extent is empty or unsolvable are skipped; an empty result raises.
HeightStack build_height_stack(const EventCatalog& cat, const Raster& dem,
                               const PixelThresholdMap& thr, int factor = 32,
                               const LaplaceConfig& cfg = {});

/// Height surface at an arbitrary stage: exact at knots, cell-wise linear
/// between them, top map shifted uniformly by the stage excess above the
/// highest knot, clamped to the bottom map below the lowest.
CoarseHeightMap interpolate_height(const HeightStack& stack, double stage_m);

/// Full inference: interpolated coarse surface, bilinear upsampling to DEM
/// resolution, wet iff height > DEM, depth = height - DEM on wet pixels.
std::pair<Raster, Raster> stage_to_depth(const HeightStack& stack, const Raster& dem, double stage_m);

/// Count of (cell, adjacent-knot) pairs where the stored heights decrease
/// with stage; diagnostic for stacks built from noisy extents.
std::size_t count_height_inversions(const HeightStack& stack);

// Artifact: per-stage coarse grids h_<stage>.asc plus a JSON manifest.
void save_height_stack(const HeightStack& stack, const std::string& dir);
HeightStack load_height_stack(const std::string& dir);

}  // namespace floodcast

#endif
