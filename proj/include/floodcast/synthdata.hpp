#ifndef FLOODCAST_SYNTHDATA_HPP
#define FLOODCAST_SYNTHDATA_HPP

#include <utility>

#include "floodcast/raster.hpp"
#include "floodcast/series.hpp"
#include "floodcast/thresholding.hpp"

namespace floodcast {

/// V-shaped valley DEM with a meandering channel. Elevation grows with the
/// horizontal distance from the channel centerline at bank_slope (m per m);
/// the centerline sits channel_depth below the datum. noise_amp adds a
/// smooth seeded perturbation (sum of a few sinusoids), zero gives exactly
/// piecewise-linear cross sections. Deterministic per seed.
Raster make_valley_dem(int rows, int cols, double channel_depth, double bank_slope,
                       double noise_amp, std::uint64_t seed, double cell_size_m = 16.0);

/// Column of the channel centerline in a given row, as produced by
/// make_valley_dem with the same dimensions.
int valley_channel_col(int rows, int cols, int row);

/// Bathtub inundation oracle: pixels with dem < stage that are 4-connected
/// to the seed pixel. Nodata pixels are never wet and block connectivity.
Raster flat_fill_extent(const Raster& dem, double stage_m, std::pair<int, int> seed_pixel);

/// Lowest-elevation pixel, the natural flood-fill seed.
std::pair<int, int> lowest_pixel(const Raster& dem);

/// Linear reservoir routing: s[t+1] = s[t] + (gain*p[t] - (s[t]-base)/k_h)*dt.
/// Requires k_h >= step so the stage stays at or above base for non-negative
/// rain. Missing precipitation counts as zero.
StageSeries route_linear_reservoir(const PrecipSeries& precip, double k_h, double gain,
                                   double base_stage_m, const std::string& gauge_id = "synth");

/// Samples n_events stages from a series (biased toward peaks), builds
/// flat-fill extents for them, and optionally flips each valid pixel with
/// probability flip_rate for robustness tests.
EventCatalog make_event_catalog(const Raster& dem, const StageSeries& stages, int n_events,
                                std::uint64_t seed, double flip_rate = 0.0);

/// Seeded storm sequence: mostly dry hours with clustered rain pulses.
/// Intensities are in mm per hour.
PrecipSeries make_storm_precip(UtcTime t0, std::size_t hours, std::uint64_t seed,
                               double storm_prob = 0.01, double mean_depth_mm = 6.0,
                               const std::string& basin_id = "synth");

}  // namespace floodcast

#endif
